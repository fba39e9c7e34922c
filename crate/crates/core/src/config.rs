//! Campaign configuration files.
//!
//! ```json
//! {
//!   "seed": 7,
//!   "schedule": [{"fidelity": 32, "budget": 300}, {"fidelity": 64, "budget": 150}],
//!   "strategy": {"kind": "tpe", "gamma": 0.15},
//!   "refinement": {"q": 0.15, "margin": 0.1, "k_warm": 10},
//!   "evaluator": {"kind": "cnn_mimic"},
//!   "space": "cnn",
//!   "workers": 1
//! }
//! ```
//!
//! `refinement`, `space` and `workers` are optional. Without `space`, the
//! quadratic benchmark gets its two-parameter space and every other
//! evaluator the CNN space sized for the schedule's largest fidelity.

use crate::evaluators::EvaluatorConfig;
use crate::fidelity::{CampaignSettings, Refinement, Schedule};
use crate::optimizers::StrategyConfig;
use crate::searchspace::defaults::{cnn_space, quadratic_space};
use crate::searchspace::{SearchSpace, SpaceError};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinSpace {
    Cnn,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceConfig {
    Builtin(BuiltinSpace),
    Custom(SearchSpace),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    pub schedule: Schedule,
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub refinement: Refinement,
    pub evaluator: EvaluatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceConfig>,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}, column {column}: {message}")]
    Schema { line: usize, column: usize, message: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("{0}")]
    Invalid(String),
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Schema {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.settings()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn settings(&self) -> CampaignSettings {
        CampaignSettings {
            schedule: self.schedule.clone(),
            strategy: self.strategy.clone(),
            refinement: self.refinement.clone(),
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn max_fidelity(&self) -> u32 {
        self.schedule.stages().last().expect("schedule is non-empty").fidelity
    }

    pub fn space(&self) -> Result<SearchSpace, ConfigError> {
        let builtin = match &self.space {
            Some(SpaceConfig::Custom(s)) => return Ok(s.clone()),
            Some(SpaceConfig::Builtin(b)) => b.clone(),
            None => match self.evaluator {
                EvaluatorConfig::QuadraticMf { .. } => BuiltinSpace::Quadratic,
                _ => BuiltinSpace::Cnn,
            },
        };
        Ok(match builtin {
            BuiltinSpace::Quadratic => quadratic_space(),
            BuiltinSpace::Cnn => cnn_space(self.max_fidelity())?,
        })
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 3,
        "schedule": [{"fidelity": 64, "budget": 20}],
        "strategy": {"kind": "random"},
        "evaluator": {"kind": "quadratic_mf", "fid_max": 64}
    }"#;

    #[test]
    fn minimal_config() {
        let c = CampaignConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.workers, 1);
        assert_eq!(c.space().unwrap().dimensionality(), 2);
        let back = CampaignConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_evaluator_reports_position() {
        let text = "{\n  \"seed\": 1,\n  \"schedule\": [{\"fidelity\": 32, \"budget\": 5}],\n  \"strategy\": {\"kind\": \"tpe\"}\n}";
        match CampaignConfig::from_json(text) {
            Err(ConfigError::Schema { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("evaluator"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_schedule_is_a_schema_error() {
        let text = MINIMAL.replace("\"budget\": 20", "\"budget\": 0");
        assert!(matches!(CampaignConfig::from_json(&text), Err(ConfigError::Schema { .. })));
    }

    #[test]
    fn cnn_space_follows_schedule() {
        let text = r#"{"seed": 1, "schedule": [{"fidelity": 32, "budget": 5}, {"fidelity": 128, "budget": 5}],
            "strategy": {"kind": "smbo"}, "evaluator": {"kind": "cnn_mimic"}}"#;
        let c = CampaignConfig::from_json(text).unwrap();
        assert_eq!(c.space().unwrap().dimensionality(), 21);
    }

    #[test]
    fn custom_space() {
        let text = r#"{"seed": 1, "schedule": [{"fidelity": 8, "budget": 5}],
            "strategy": {"kind": "random"}, "evaluator": {"kind": "external", "command": ["true"]},
            "space": {"params": [{"name": "a", "type": "continuous", "low": 0, "high": 1, "scale": "linear"}], "conditions": []}}"#;
        let c = CampaignConfig::from_json(text).unwrap();
        assert_eq!(c.space().unwrap().names(), vec!["a".to_owned()]);
    }
}
