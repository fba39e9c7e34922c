//! Trial logs, checkpoints and campaign reports.
//!
//! A trial log is an append-only file of JSON lines, one [`TrialRecord`] per
//! line. Checkpoints are separate snapshot files that pin a campaign's
//! configuration and the digest of the log prefix they were written against.

mod checkpoint;
mod report;

pub use checkpoint::{Checkpoint, CheckpointBody, CheckpointError, CHECKPOINT_VERSION};
pub use report::{
    best_so_far, cost_to_reach, mean_and_stddev, stage_curves, summarize, time_reduction, write_curve_csv,
    Axis, CampaignSummary, CurvePoint, ReportError,
};

use crate::searchspace::Configuration;
use crate::trial::{Status, Trial, TrialId};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: TrialId,
    pub stage: usize,
    pub fidelity: u32,
    pub config: Configuration,
    /// `null` for failed trials.
    pub objective: Option<f64>,
    pub cost_minutes: f64,
    pub cum_cost_minutes: f64,
    pub status: Status,
    pub seed: u64,
    /// Minutes since the campaign started on the campaign clock.
    pub ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TrialRecord {
    pub fn from_trial(trial: &Trial, cum_cost_minutes: f64, ts: f64, message: Option<String>) -> Self {
        Self {
            trial_id: trial.id,
            stage: trial.stage,
            fidelity: trial.fidelity,
            config: trial.config.clone(),
            objective: trial.objective,
            cost_minutes: trial.cost_minutes,
            cum_cost_minutes,
            status: trial.status,
            seed: trial.seed,
            ts,
            message,
        }
    }

    pub fn to_trial(&self) -> Trial {
        Trial {
            id: self.trial_id,
            stage: self.stage,
            fidelity: self.fidelity,
            config: self.config.clone(),
            objective: self.objective,
            cost_minutes: self.cost_minutes,
            status: self.status,
            seed: self.seed,
        }
    }

    /// One log line, without the trailing newline.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("expected trial id {expected}, got {found}")]
    IdOrder { expected: TrialId, found: TrialId },
    #[error("trial {trial_id}: cumulative cost {found} does not extend the previous total {previous}")]
    CumulativeCost { trial_id: TrialId, previous: f64, found: f64 },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Splits log text into complete record lines. A final line that has no
/// newline and does not parse is a torn write and is dropped.
fn parse_records(text: &str, path: &Path) -> Result<(Vec<TrialRecord>, usize), LogError> {
    let mut records = Vec::new();
    let mut consumed = 0;
    let mut rest = text;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let (line, len, terminated) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1, true),
            None => (rest, rest.len(), false),
        };
        rest = &rest[len..];
        if line.trim().is_empty() {
            consumed += len;
            continue;
        }
        match serde_json::from_str::<TrialRecord>(line) {
            Ok(r) => {
                if let Some(prev) = records.last().map(|p: &TrialRecord| p.trial_id) {
                    if r.trial_id != prev + 1 {
                        return Err(LogError::IdOrder {
                            expected: prev + 1,
                            found: r.trial_id,
                        });
                    }
                }
                records.push(r);
                consumed += len;
            }
            Err(_) if !terminated => break,
            Err(e) => {
                return Err(LogError::Parse {
                    path: path.to_owned(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok((records, consumed))
}

/// Reads every complete record of a log.
pub fn load_log(path: &Path) -> Result<Vec<TrialRecord>, LogError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_records(&text, path)?.0)
}

/// Renders records exactly as [`TrialLog`] writes them.
pub fn render_log(records: &[TrialRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

/// Append-only writer with id and cumulative-cost checks.
#[derive(Debug)]
pub struct TrialLog {
    path: PathBuf,
    file: File,
    last_id: TrialId,
    cum_cost: f64,
    len: usize,
}

impl TrialLog {
    /// Starts an empty log, replacing any file at `path`.
    pub fn create(path: &Path) -> Result<Self, LogError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_owned(),
            file,
            last_id: 0,
            cum_cost: 0.0,
            len: 0,
        })
    }

    /// Opens an existing log for appending; a torn final line is cut off.
    pub fn open(path: &Path) -> Result<(Self, Vec<TrialRecord>), LogError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let (records, consumed) = parse_records(&text, path)?;
        let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
        file.set_len(consumed as u64).map_err(io_err(path))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0)).map_err(io_err(path))?;
        let log = Self {
            path: path.to_owned(),
            file,
            last_id: records.last().map_or(0, |r| r.trial_id),
            cum_cost: records.last().map_or(0.0, |r| r.cum_cost_minutes),
            len: records.len(),
        };
        Ok((log, records))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, record: &TrialRecord) -> Result<(), LogError> {
        if record.trial_id != self.last_id + 1 {
            return Err(LogError::IdOrder {
                expected: self.last_id + 1,
                found: record.trial_id,
            });
        }
        let expected = self.cum_cost + record.cost_minutes;
        if (record.cum_cost_minutes - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(LogError::CumulativeCost {
                trial_id: record.trial_id,
                previous: self.cum_cost,
                found: record.cum_cost_minutes,
            });
        }
        let mut line = record.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        self.last_id = record.trial_id;
        self.cum_cost = record.cum_cost_minutes;
        self.len += 1;
        Ok(())
    }

    /// Forces appended records to stable storage.
    pub fn sync(&self) -> Result<(), LogError> {
        self.file.sync_data().map_err(io_err(&self.path))
    }
}
