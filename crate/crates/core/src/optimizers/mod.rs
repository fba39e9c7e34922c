//! Suggest/report optimizers over a [`SearchSpace`].
//!
//! One [`Optimizer`] owns a history of reported results, the configurations
//! it has handed out but not yet heard back about, and a seeded random
//! stream. Given the same seed and the same sequence of calls, every strategy
//! produces the same suggestions.

pub mod ga;
pub mod smbo;
pub mod tpe;

pub use ga::{GaConfig, GaIndividual};
pub use smbo::{expected_improvement, SmboConfig};
pub use tpe::{tpe_split, TpeConfig};

use crate::searchspace::{Configuration, SearchSpace, Violation};
use crate::seed::{rng_from, Rng};
use crate::trial::TrialId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyConfig {
    Random,
    Tpe(TpeConfig),
    Smbo(SmboConfig),
    Ga(GaConfig),
}

impl StrategyConfig {
    pub fn tpe() -> Self {
        StrategyConfig::Tpe(TpeConfig::default())
    }

    pub fn smbo() -> Self {
        StrategyConfig::Smbo(SmboConfig::default())
    }

    pub fn ga() -> Self {
        StrategyConfig::Ga(GaConfig::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::Random => "random",
            StrategyConfig::Tpe(_) => "tpe",
            StrategyConfig::Smbo(_) => "smbo",
            StrategyConfig::Ga(_) => "ga",
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_owned()));
        match self {
            StrategyConfig::Random => Ok(()),
            StrategyConfig::Tpe(c) => {
                if !(c.gamma > 0.0 && c.gamma <= 1.0) {
                    return bad("tpe gamma must be in (0, 1]");
                }
                if c.n_candidates == 0 {
                    return bad("tpe n_candidates must be >= 1");
                }
                Ok(())
            }
            StrategyConfig::Smbo(c) => {
                if c.n_prior_candidates == 0 && (c.n_best == 0 || c.n_local == 0) {
                    return bad("smbo needs at least one candidate");
                }
                if c.forest.trees == 0 || c.forest.min_leaf == 0 {
                    return bad("smbo forest needs trees >= 1 and min_leaf >= 1");
                }
                Ok(())
            }
            StrategyConfig::Ga(c) => {
                if c.population < 2 {
                    return bad("ga population must be >= 2");
                }
                if c.tournament == 0 {
                    return bad("ga tournament size must be >= 1");
                }
                if !(0.0..=1.0).contains(&c.crossover) || !(0.0..=1.0).contains(&c.mutation) {
                    return bad("ga probabilities must be in [0, 1]");
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("trial {0} was already reported")]
    DuplicateReport(TrialId),
    #[error("trial id {0} is already in use")]
    DuplicateTrialId(TrialId),
    #[error("reported configuration does not fit the search space: {0:?}")]
    InvalidConfiguration(Vec<Violation>),
    #[error("objective must be finite, got {0}")]
    NonFiniteObjective(f64),
    #[error("invalid strategy configuration: {0}")]
    InvalidConfig(String),
    #[error("genetic algorithm population is empty")]
    EmptyPopulation,
    #[error("genetic algorithm individual has no fitness")]
    MissingFitness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: TrialId,
    pub config: Configuration,
    pub objective: f64,
}

#[derive(Debug, Clone)]
enum Strategy {
    Random,
    Tpe(TpeConfig),
    Smbo(SmboConfig),
    Ga(ga::GaState),
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    space: SearchSpace,
    rng: Rng,
    history: Vec<Observation>,
    pending: BTreeMap<TrialId, Configuration>,
    strategy: Strategy,
}

impl Optimizer {
    pub fn new(space: SearchSpace, strategy: &StrategyConfig, seed: u64) -> Result<Self, OptimizerError> {
        strategy.validate()?;
        let strategy = match strategy {
            StrategyConfig::Random => Strategy::Random,
            StrategyConfig::Tpe(c) => Strategy::Tpe(c.clone()),
            StrategyConfig::Smbo(c) => Strategy::Smbo(c.clone()),
            StrategyConfig::Ga(c) => Strategy::Ga(ga::GaState::new(c.clone())),
        };
        Ok(Self {
            space,
            rng: rng_from(seed),
            history: Vec::new(),
            pending: BTreeMap::new(),
            strategy,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn pending(&self) -> &BTreeMap<TrialId, Configuration> {
        &self.pending
    }

    pub fn best(&self) -> Option<&Observation> {
        self.history
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.id.cmp(&b.id)))
    }

    /// Next configuration to evaluate under trial id `id`.
    pub fn suggest(&mut self, id: TrialId) -> Result<Configuration, OptimizerError> {
        if self.pending.contains_key(&id) || self.history.iter().any(|o| o.id == id) {
            return Err(OptimizerError::DuplicateTrialId(id));
        }
        let config = match &mut self.strategy {
            Strategy::Random => self.space.sample(&mut self.rng),
            Strategy::Tpe(cfg) => tpe::suggest(&self.space, &self.history, cfg, &mut self.rng),
            Strategy::Smbo(cfg) => smbo::suggest(&self.space, &self.history, cfg, &mut self.rng),
            Strategy::Ga(state) => state.suggest(id, &self.space, &self.history, &mut self.rng)?,
        };
        debug_assert!(self.space.is_valid(&config));
        self.pending.insert(id, config.clone());
        Ok(config)
    }

    /// Records an evaluation. `id` need not have been suggested, which is how
    /// warm-start points enter a fresh optimizer.
    pub fn report(&mut self, id: TrialId, config: Configuration, objective: f64) -> Result<(), OptimizerError> {
        if self.history.iter().any(|o| o.id == id) {
            return Err(OptimizerError::DuplicateReport(id));
        }
        if !objective.is_finite() {
            return Err(OptimizerError::NonFiniteObjective(objective));
        }
        self.space
            .validate(&config)
            .map_err(OptimizerError::InvalidConfiguration)?;
        self.pending.remove(&id);
        if let Strategy::Ga(state) = &mut self.strategy {
            state.report(id, &config, objective);
        }
        self.history.push(Observation {
            id,
            config,
            objective,
        });
        Ok(())
    }
}

/// History sorted best-first; ties keep the lower trial id first.
pub(crate) fn ranked(history: &[Observation]) -> Vec<&Observation> {
    let mut sorted: Vec<&Observation> = history.iter().collect();
    sorted.sort_by(|a, b| a.objective.total_cmp(&b.objective).then(a.id.cmp(&b.id)));
    sorted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::defaults::{cnn_space, quadratic_space};

    fn all() -> Vec<StrategyConfig> {
        vec![
            StrategyConfig::Random,
            StrategyConfig::tpe(),
            StrategyConfig::smbo(),
            StrategyConfig::ga(),
        ]
    }

    fn objective(c: &Configuration) -> f64 {
        let x1 = c.f64("x1").unwrap();
        let x2 = c.f64("x2").unwrap();
        (x1 - 0.3).powi(2) + (x2 - 0.3).powi(2)
    }

    #[test]
    fn random_matches_plain_sampling() {
        let space = quadratic_space();
        let mut opt = Optimizer::new(space.clone(), &StrategyConfig::Random, 5).unwrap();
        let mut rng = rng_from(5);
        for id in 1..=5 {
            assert_eq!(opt.suggest(id).unwrap(), space.sample(&mut rng));
        }
    }

    #[test]
    fn suggestions_are_valid_and_pending() {
        let space = cnn_space(64).unwrap().at_fidelity(64).unwrap();
        for strategy in all() {
            let mut opt = Optimizer::new(space.clone(), &strategy, 1).unwrap();
            for id in 1..=40 {
                let c = opt.suggest(id).unwrap();
                assert!(space.is_valid(&c));
                assert!(opt.pending().contains_key(&id));
                let lr = c.f64("learning_rate").unwrap();
                opt.report(id, c, lr).unwrap();
                assert!(!opt.pending().contains_key(&id));
            }
        }
    }

    #[test]
    fn cloned_states_suggest_identically() {
        let space = quadratic_space();
        for strategy in all() {
            let mut opt = Optimizer::new(space.clone(), &strategy, 9).unwrap();
            for id in 1..=30 {
                let c = opt.suggest(id).unwrap();
                let y = objective(&c);
                opt.report(id, c, y).unwrap();
            }
            let mut twin = opt.clone();
            assert_eq!(opt.suggest(31).unwrap(), twin.suggest(31).unwrap(), "{}", strategy.name());
        }
    }

    #[test]
    fn double_report_is_rejected() {
        let mut opt = Optimizer::new(quadratic_space(), &StrategyConfig::Random, 0).unwrap();
        let c = opt.suggest(1).unwrap();
        opt.report(1, c.clone(), 0.5).unwrap();
        assert_eq!(opt.report(1, c, 0.4), Err(OptimizerError::DuplicateReport(1)));
        assert_eq!(opt.suggest(1), Err(OptimizerError::DuplicateTrialId(1)));
    }

    #[test]
    fn warm_start_report_accepted() {
        let mut opt = Optimizer::new(quadratic_space(), &StrategyConfig::tpe(), 0).unwrap();
        let c: Configuration = [("x1", 0.3), ("x2", 0.3)].into_iter().collect();
        opt.report(100, c, 0.0).unwrap();
        assert_eq!(opt.history().len(), 1);
        let bad: Configuration = [("x1", 3.0), ("x2", 0.3)].into_iter().collect();
        assert!(matches!(opt.report(101, bad, 0.0), Err(OptimizerError::InvalidConfiguration(_))));
    }

    #[test]
    fn out_of_order_reports() {
        let mut opt = Optimizer::new(quadratic_space(), &StrategyConfig::smbo(), 0).unwrap();
        let a = opt.suggest(1).unwrap();
        let b = opt.suggest(2).unwrap();
        opt.report(2, b, 0.2).unwrap();
        opt.report(1, a, 0.1).unwrap();
        assert_eq!(opt.best().unwrap().id, 1);
    }

    #[test]
    fn invalid_strategy_configs() {
        let ga = StrategyConfig::Ga(GaConfig {
            population: 1,
            ..GaConfig::default()
        });
        assert!(Optimizer::new(quadratic_space(), &ga, 0).is_err());
        let tpe = StrategyConfig::Tpe(TpeConfig {
            gamma: 0.0,
            ..TpeConfig::default()
        });
        assert!(Optimizer::new(quadratic_space(), &tpe, 0).is_err());
    }

    #[test]
    fn strategy_json() {
        let s: StrategyConfig = serde_json::from_str(r#"{"kind": "tpe", "gamma": 0.2}"#).unwrap();
        match s {
            StrategyConfig::Tpe(c) => {
                assert_eq!(c.gamma, 0.2);
                assert_eq!(c.n_startup, 20);
            }
            _ => panic!(),
        }
        let r: StrategyConfig = serde_json::from_str(r#"{"kind": "random"}"#).unwrap();
        assert_eq!(r, StrategyConfig::Random);
    }
}
