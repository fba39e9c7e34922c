//! Trials: one evaluation of a configuration at a fidelity.

use crate::searchspace::Configuration;
use serde::{Deserialize, Serialize};

pub type TrialId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// What an evaluator is asked to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRequest {
    pub trial_id: TrialId,
    pub fidelity: u32,
    pub seed: u64,
    pub config: Configuration,
}

/// What an evaluator reports back.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial_id: TrialId,
    pub status: Status,
    /// Validation-error proxy; meaningful only when `status` is ok.
    pub objective: f64,
    pub cost_minutes: f64,
    pub message: Option<String>,
}

impl TrialResult {
    pub fn ok(trial_id: TrialId, objective: f64, cost_minutes: f64) -> Self {
        Self {
            trial_id,
            status: Status::Ok,
            objective,
            cost_minutes,
            message: None,
        }
    }

    pub fn failed(trial_id: TrialId, cost_minutes: f64, message: impl Into<String>) -> Self {
        Self {
            trial_id,
            status: Status::Failed,
            objective: f64::NAN,
            cost_minutes,
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// A completed evaluation inside a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub id: TrialId,
    pub stage: usize,
    pub fidelity: u32,
    pub config: Configuration,
    /// `None` for failed trials.
    pub objective: Option<f64>,
    pub cost_minutes: f64,
    pub status: Status,
    pub seed: u64,
}

impl Trial {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok && self.objective.is_some_and(f64::is_finite)
    }
}
