//! Objective functions.
//!
//! [`CnnMimic`] and [`QuadraticMf`] are deterministic synthetic benchmarks
//! whose cost is simulated; [`External`] drives real trainers over a
//! line-delimited JSON protocol on a child process's stdin/stdout.

mod external;
mod synthetic;

pub use external::{External, ExternalConfig, PROTOCOL_VERSION};
pub use synthetic::{gaussian_noise, CnnMimic, QuadraticMf};

use crate::trial::{TrialRequest, TrialResult};
use serde::{Deserialize, Serialize};

/// How the campaign clock advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    /// Reported costs are the elapsed time.
    Simulated,
    /// Elapsed time is measured.
    Wall,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot start worker `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("worker handshake failed: {0}")]
    Handshake(String),
    #[error("evaluator does not support fidelity {0}")]
    UnsupportedFidelity(u32),
}

/// Evaluates trial requests. A returned `TrialResult` may itself be a failed
/// trial; `Err` means the evaluator can no longer serve requests.
pub trait Evaluator: Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, request: &TrialRequest) -> Result<TrialResult, EvalError>;

    /// Largest number of requests served at once; `None` for unlimited.
    fn concurrency(&self) -> Option<usize> {
        None
    }

    fn clock(&self) -> Clock {
        Clock::Simulated
    }

    /// Checked before a campaign starts.
    fn supports(&self, _fidelity: u32) -> bool {
        true
    }
}

/// Evaluator block of a campaign configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    CnnMimic {
        #[serde(default = "default_mimic_noise")]
        noise_sd: f64,
    },
    QuadraticMf {
        fid_max: u32,
        #[serde(default = "default_quadratic_noise")]
        noise_sd: f64,
    },
    External(ExternalConfig),
}

fn default_mimic_noise() -> f64 {
    synthetic::MIMIC_NOISE_SD
}

fn default_quadratic_noise() -> f64 {
    synthetic::QUADRATIC_NOISE_SD
}

impl EvaluatorConfig {
    /// Builds the evaluator; external workers are spawned and handshaken
    /// here, `workers` of them.
    pub fn build(&self, workers: usize) -> Result<Box<dyn Evaluator>, EvalError> {
        Ok(match self {
            EvaluatorConfig::CnnMimic { noise_sd } => Box::new(CnnMimic::with_noise(*noise_sd)),
            EvaluatorConfig::QuadraticMf { fid_max, noise_sd } => {
                Box::new(QuadraticMf::with_noise(*fid_max, *noise_sd))
            }
            EvaluatorConfig::External(cfg) => Box::new(External::start(cfg.clone(), workers)?),
        })
    }
}
