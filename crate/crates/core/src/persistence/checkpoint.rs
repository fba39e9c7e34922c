use super::{render_log, TrialRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint is not valid JSON: {0}")]
    Parse(String),
    #[error("checkpoint digest mismatch: file is corrupt or truncated")]
    DigestMismatch,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint covers {needed} trials but the log has {found}")]
    LogTooShort { needed: usize, found: usize },
    #[error("log does not match the checkpoint's log digest")]
    LogMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointBody {
    pub version: u32,
    /// The campaign definition, opaque to this module.
    pub campaign: serde_json::Value,
    /// Number of log records covered by `log_digest`.
    pub trials: usize,
    /// SHA-256 of the first `trials` log lines, newlines included.
    pub log_digest: String,
    pub stage: usize,
}

/// A checkpoint file: `{"body": {...}, "sha256": "<hex of the body>"}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub body: CheckpointBody,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    body: serde_json::Value,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn new(campaign: serde_json::Value, log_prefix: &[TrialRecord], stage: usize) -> Self {
        Self {
            body: CheckpointBody {
                version: CHECKPOINT_VERSION,
                campaign,
                trials: log_prefix.len(),
                log_digest: sha256_hex(render_log(log_prefix).as_bytes()),
                stage,
            },
        }
    }

    pub fn to_json(&self) -> String {
        let body = serde_json::to_value(&self.body).expect("body serializes");
        let sha256 = sha256_hex(serde_json::to_string(&body).expect("value serializes").as_bytes());
        serde_json::to_string_pretty(&Envelope { body, sha256 }).expect("envelope serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let env: Envelope = serde_json::from_str(text).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        let canonical = serde_json::to_string(&env.body).expect("value serializes");
        if sha256_hex(canonical.as_bytes()) != env.sha256 {
            return Err(CheckpointError::DigestMismatch);
        }
        let body: CheckpointBody =
            serde_json::from_value(env.body).map_err(|e| CheckpointError::Parse(e.to_string()))?;
        if body.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(body.version));
        }
        Ok(Self { body })
    }

    /// Writes through a temporary file and a rename.
    pub fn write(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_json())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that `log` starts with the records this checkpoint was taken
    /// against.
    pub fn verify_log(&self, log: &[TrialRecord]) -> Result<(), CheckpointError> {
        if log.len() < self.body.trials {
            return Err(CheckpointError::LogTooShort {
                needed: self.body.trials,
                found: log.len(),
            });
        }
        if sha256_hex(render_log(&log[..self.body.trials]).as_bytes()) != self.body.log_digest {
            return Err(CheckpointError::LogMismatch);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::record;
    use super::*;

    #[test]
    fn round_trip_and_verify() {
        let log = vec![record(1, Some(0.4), 1.0, 1.0), record(2, Some(0.3), 1.0, 2.0)];
        let cp = Checkpoint::new(serde_json::json!({"seed": 3}), &log[..1], 0);
        let back = Checkpoint::from_json(&cp.to_json()).unwrap();
        assert_eq!(back, cp);
        back.verify_log(&log).unwrap();
        assert!(matches!(back.verify_log(&[]), Err(CheckpointError::LogTooShort { .. })));
        let other = vec![record(1, Some(0.5), 1.0, 1.0)];
        assert!(matches!(back.verify_log(&other), Err(CheckpointError::LogMismatch)));
    }

    #[test]
    fn tampering_is_detected() {
        let cp = Checkpoint::new(serde_json::json!({"seed": 3}), &[], 0);
        let text = cp.to_json().replace("\"seed\": 3", "\"seed\": 4");
        assert!(matches!(Checkpoint::from_json(&text), Err(CheckpointError::DigestMismatch)));
        let json = cp.to_json();
        let truncated = &json[..json.len() - 10];
        assert!(matches!(Checkpoint::from_json(truncated), Err(CheckpointError::Parse(_))));
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.json");
        let cp = Checkpoint::new(serde_json::json!(null), &[], 2);
        cp.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), cp);
        assert!(!dir.path().join("cp.tmp").exists());
    }
}
