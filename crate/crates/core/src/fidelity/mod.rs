//! Increasing-fidelity campaigns.
//!
//! A campaign runs one optimizer per fidelity stage. Between stages it keeps
//! the best trials of the finished stage, shrinks the search space around
//! them, re-bounds resolution-coupled parameters for the next fidelity and
//! re-evaluates the top configurations first on the new stage.

mod campaign;

pub use campaign::{plain_loop, Campaign, CampaignResult};

use crate::evaluators::EvalError;
use crate::optimizers::{OptimizerError, StrategyConfig};
use crate::persistence::{CheckpointError, LogError};
use crate::searchspace::{Configuration, Domain, SearchSpace, SpaceError, Value};
use crate::trial::TrialId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityStage {
    pub fidelity: u32,
    pub budget: usize,
}

/// Stages with strictly increasing fidelity and positive budgets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FidelityStage>", into = "Vec<FidelityStage>")]
pub struct Schedule {
    stages: Vec<FidelityStage>,
}

impl Schedule {
    pub fn new(stages: Vec<(u32, usize)>) -> Result<Self, CampaignError> {
        Self::try_from(
            stages
                .into_iter()
                .map(|(fidelity, budget)| FidelityStage { fidelity, budget })
                .collect::<Vec<_>>(),
        )
    }

    pub fn single(fidelity: u32, budget: usize) -> Self {
        Self::new(vec![(fidelity, budget)]).expect("one positive stage is valid")
    }

    pub fn stages(&self) -> &[FidelityStage] {
        &self.stages
    }

    pub fn total_budget(&self) -> usize {
        self.stages.iter().map(|s| s.budget).sum()
    }
}

impl TryFrom<Vec<FidelityStage>> for Schedule {
    type Error = CampaignError;

    fn try_from(stages: Vec<FidelityStage>) -> Result<Self, CampaignError> {
        if stages.is_empty() {
            return Err(CampaignError::Schedule("schedule has no stages".into()));
        }
        for (i, s) in stages.iter().enumerate() {
            if s.budget == 0 {
                return Err(CampaignError::Schedule(format!("stage {i} has zero budget")));
            }
            if s.fidelity == 0 {
                return Err(CampaignError::Schedule(format!("stage {i} has fidelity 0")));
            }
            if i > 0 && s.fidelity <= stages[i - 1].fidelity {
                return Err(CampaignError::Schedule(format!(
                    "fidelity must strictly increase: stage {i} has {} after {}",
                    s.fidelity,
                    stages[i - 1].fidelity
                )));
            }
        }
        Ok(Self { stages })
    }
}

impl From<Schedule> for Vec<FidelityStage> {
    fn from(s: Schedule) -> Self {
        s.stages
    }
}

/// Stage hand-off parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Refinement {
    /// Elite quantile.
    pub q: f64,
    /// Relative widening of elite ranges on the transformed scale.
    pub margin: f64,
    /// Elites re-evaluated at the start of the next stage.
    pub k_warm: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            q: 0.15,
            margin: 0.1,
            k_warm: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSettings {
    pub schedule: Schedule,
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub refinement: Refinement,
    pub seed: u64,
    /// Trials evaluated concurrently.
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

impl CampaignSettings {
    pub fn new(schedule: Schedule, strategy: StrategyConfig, seed: u64) -> Self {
        Self {
            schedule,
            strategy,
            refinement: Refinement::default(),
            seed,
            workers: 1,
        }
    }

    pub fn with_refinement(mut self, refinement: Refinement) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        self.strategy.validate()?;
        let r = &self.refinement;
        if !(r.q > 0.0 && r.q <= 1.0) {
            return Err(CampaignError::Settings(format!("q must be in (0, 1], got {}", r.q)));
        }
        if !(r.margin >= 0.0 && r.margin.is_finite()) {
            return Err(CampaignError::Settings(format!("margin must be >= 0, got {}", r.margin)));
        }
        if self.workers == 0 {
            return Err(CampaignError::Settings("workers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("evaluator failed: {0}")]
    Evaluator(#[from] EvalError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("evaluator `{evaluator}` does not support fidelity {fidelity}")]
    UnsupportedFidelity { evaluator: String, fidelity: u32 },
    #[error("log does not match the campaign at trial {trial_id}: {reason}")]
    ReplayMismatch { trial_id: TrialId, reason: String },
    #[error("campaign is already at its final stage")]
    FinalStage,
    #[error("lifted configuration is not valid at fidelity {fidelity}")]
    LiftInvalid { fidelity: u32 },
}

/// Carries a configuration to another fidelity's space: resolution-coupled
/// integers are clamped into the target bounds and parameters whose
/// condition no longer holds are dropped. Other values are copied.
pub fn lift_config(
    config: &Configuration,
    from_fidelity: u32,
    to_fidelity: u32,
    target: &SearchSpace,
) -> Configuration {
    if from_fidelity == to_fidelity && target.is_valid(config) {
        return config.clone();
    }
    let mut out = Configuration::new();
    for &i in target.order() {
        if !target.is_active(i, &out) {
            continue;
        }
        let p = &target.params()[i];
        let value = match (config.get(&p.name), &p.domain) {
            (Some(Value::Int(v)), Domain::Integer { low, high, .. }) if p.resolution_coupled => {
                Value::Int((*v).clamp(*low, *high))
            }
            (Some(v), _) => v.clone(),
            // only reachable if a parent value changed; take the unit midpoint
            (None, _) => p.from_unit(0.5),
        };
        out.insert(p.name.clone(), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::defaults::{cnn_space, filters, kernel, N_CONV};

    #[test]
    fn schedule_rules() {
        assert!(Schedule::new(vec![]).is_err());
        assert!(Schedule::new(vec![(32, 0)]).is_err());
        assert!(Schedule::new(vec![(64, 10), (32, 10)]).is_err());
        assert!(Schedule::new(vec![(32, 10), (32, 10)]).is_err());
        let s = Schedule::new(vec![(32, 750), (64, 500), (128, 250)]).unwrap();
        assert_eq!(s.total_budget(), 1500);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"[{"fidelity":32,"budget":750},{"fidelity":64,"budget":500},{"fidelity":128,"budget":250}]"#);
        assert!(serde_json::from_str::<Schedule>(r#"[{"fidelity":64,"budget":1},{"fidelity":8,"budget":1}]"#).is_err());
    }

    fn config_with_depth(space: &SearchSpace, n_conv: i64) -> Configuration {
        let mut c = space.sample(&mut crate::seed::rng_from(1));
        for k in 1..=6 {
            c.remove(&filters(k));
            c.remove(&kernel(k));
        }
        c.insert(N_CONV, n_conv);
        for k in 1..=n_conv as u32 {
            c.insert(filters(k), 32i64);
            c.insert(kernel(k), 5i64);
        }
        assert!(space.is_valid(&c));
        c
    }

    #[test]
    fn lift_keeps_depth_when_bound_grows() {
        let root = cnn_space(128).unwrap();
        let at32 = root.at_fidelity(32).unwrap();
        let at128 = root.at_fidelity(128).unwrap();
        let c = config_with_depth(&at32, 2);
        let lifted = lift_config(&c, 32, 128, &at128);
        assert_eq!(lifted, c);
        assert!(at128.is_valid(&lifted));
    }

    #[test]
    fn lift_clamps_depth_and_drops_orphans() {
        let root = cnn_space(128).unwrap();
        let at128 = root.at_fidelity(128).unwrap();
        let at16 = root.at_fidelity(16).unwrap();
        let c = config_with_depth(&at128, 4);
        let lifted = lift_config(&c, 128, 16, &at16);
        assert_eq!(lifted.i64(N_CONV), Some(3));
        assert!(!lifted.contains(&filters(4)));
        assert!(!lifted.contains(&kernel(4)));
        assert_eq!(lifted.i64(&filters(3)), Some(32));
        assert!(at16.is_valid(&lifted));
    }

    #[test]
    fn lift_to_same_fidelity_is_identity() {
        let at64 = cnn_space(128).unwrap().at_fidelity(64).unwrap();
        let c = config_with_depth(&at64, 3);
        assert_eq!(lift_config(&c, 64, 64, &at64), c);
    }

    #[test]
    fn settings_json_defaults() {
        let s: CampaignSettings = serde_json::from_str(
            r#"{"schedule": [{"fidelity": 32, "budget": 5}], "strategy": {"kind": "ga"}, "seed": 4}"#,
        )
        .unwrap();
        assert_eq!(s.refinement, Refinement::default());
        assert_eq!(s.workers, 1);
        let bad = CampaignSettings {
            refinement: Refinement {
                q: 0.0,
                ..Refinement::default()
            },
            ..s
        };
        assert!(bad.validate().is_err());
    }
}
