use super::{Clock, EvalError, Evaluator};
use crate::trial::{Status, TrialId, TrialRequest, TrialResult};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

pub const PROTOCOL_VERSION: u32 = 1;
const STDERR_TAIL: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_handshake_timeout")]
    pub handshake_timeout_secs: f64,
    /// Extra attempts after a timeout, crash or malformed response.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout() -> f64 {
    3600.0
}

fn default_handshake_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    1
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout_secs: default_timeout(),
            handshake_timeout_secs: default_handshake_timeout(),
            retries: default_retries(),
        }
    }

    pub fn with_timeout(mut self, secs: f64) -> Self {
        self.timeout_secs = secs;
        self
    }
}

#[derive(Debug, Deserialize)]
struct Handshake {
    protocol: u32,
    name: String,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    trial_id: TrialId,
    status: Status,
    #[serde(default)]
    objective: Option<f64>,
    #[serde(default)]
    cost_minutes: Option<f64>,
    #[serde(default)]
    message: Option<String>,
}

#[derive(Debug)]
enum AttemptError {
    Timeout,
    Crashed(String),
    Malformed(String),
    Protocol(String),
}

impl std::fmt::Display for AttemptError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttemptError::Timeout => write!(f, "worker timed out"),
            AttemptError::Crashed(m) => write!(f, "worker crashed: {m}"),
            AttemptError::Malformed(m) => write!(f, "malformed response: {m}"),
            AttemptError::Protocol(m) => write!(f, "protocol error: {m}"),
        }
    }
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    stderr: Arc<Mutex<String>>,
    name: String,
}

impl Worker {
    fn spawn(cfg: &ExternalConfig) -> Result<Self, EvalError> {
        let spawn_err = |reason: String| EvalError::Spawn {
            command: cfg.command.join(" "),
            reason,
        };
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| spawn_err("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| spawn_err(e.to_string()))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut err_pipe = child.stderr.take().expect("piped");

        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = err_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut tail = sink.lock().expect("stderr lock");
                tail.push_str(&String::from_utf8_lossy(&buf[..n]));
                if tail.len() > STDERR_TAIL {
                    let cut = tail.len() - STDERR_TAIL;
                    let cut = (cut..tail.len()).find(|&i| tail.is_char_boundary(i)).unwrap_or(cut);
                    tail.drain(..cut);
                }
            }
        });

        let mut worker = Worker {
            child,
            stdin,
            lines,
            stderr,
            name: String::new(),
        };
        let timeout = Duration::from_secs_f64(cfg.handshake_timeout_secs);
        let line = match worker.lines.recv_timeout(timeout) {
            Ok(l) => l,
            Err(RecvTimeoutError::Timeout) => {
                return Err(EvalError::Handshake("no handshake before timeout".into()));
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(EvalError::Handshake(format!(
                    "worker exited before handshake ({})",
                    worker.diagnostic()
                )));
            }
        };
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| EvalError::Handshake(format!("bad handshake `{line}`: {e}")))?;
        if hs.protocol != PROTOCOL_VERSION {
            return Err(EvalError::Handshake(format!(
                "unsupported protocol version {}",
                hs.protocol
            )));
        }
        worker.name = hs.name;
        Ok(worker)
    }

    fn diagnostic(&mut self) -> String {
        let _ = self.child.kill();
        let status = self
            .child
            .wait()
            .map(|s| s.to_string())
            .unwrap_or_else(|e| e.to_string());
        // give the stderr reader a moment to drain
        thread::sleep(Duration::from_millis(20));
        let tail = self.stderr.lock().expect("stderr lock").trim().to_owned();
        if tail.is_empty() {
            status
        } else {
            format!("{status}; stderr: {tail}")
        }
    }

    fn attempt(&mut self, request: &TrialRequest, timeout: Duration) -> Result<TrialResult, AttemptError> {
        let mut line = serde_json::to_string(request).expect("request serializes");
        line.push('\n');
        if let Err(e) = self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()) {
            return Err(AttemptError::Crashed(format!("{e} ({})", self.diagnostic())));
        }
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(l) => l,
            Err(RecvTimeoutError::Timeout) => return Err(AttemptError::Timeout),
            Err(RecvTimeoutError::Disconnected) => return Err(AttemptError::Crashed(self.diagnostic())),
        };
        let resp: WireResponse =
            serde_json::from_str(&reply).map_err(|e| AttemptError::Malformed(format!("`{reply}`: {e}")))?;
        if resp.trial_id != request.trial_id {
            return Err(AttemptError::Protocol(format!(
                "expected trial_id {}, got {}",
                request.trial_id, resp.trial_id
            )));
        }
        let cost = resp.cost_minutes.unwrap_or(0.0);
        if !(cost.is_finite() && cost >= 0.0) {
            return Err(AttemptError::Malformed(format!("invalid cost_minutes {cost}")));
        }
        match resp.status {
            Status::Ok => match resp.objective {
                Some(y) if y.is_finite() => Ok(TrialResult {
                    message: resp.message,
                    ..TrialResult::ok(request.trial_id, y, cost)
                }),
                other => Err(AttemptError::Malformed(format!("ok status with objective {other:?}"))),
            },
            Status::Failed => Ok(TrialResult::failed(
                request.trial_id,
                cost,
                resp.message.unwrap_or_else(|| "worker reported failure".into()),
            )),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Pool {
    idle: Vec<Worker>,
    /// Workers idle or checked out.
    live: usize,
}

/// Pool of external worker processes, one request in flight per worker.
pub struct External {
    cfg: ExternalConfig,
    size: usize,
    pool: Mutex<Pool>,
    available: Condvar,
    name: String,
}

impl std::fmt::Debug for External {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("External")
            .field("cfg", &self.cfg)
            .field("size", &self.size)
            .field("name", &self.name)
            .finish()
    }
}

impl External {
    /// Spawns `workers` processes and waits for each handshake.
    pub fn start(cfg: ExternalConfig, workers: usize) -> Result<Self, EvalError> {
        let workers = workers.max(1);
        let pool = (0..workers)
            .map(|_| Worker::spawn(&cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let name = pool[0].name.clone();
        Ok(Self {
            cfg,
            size: workers,
            pool: Mutex::new(Pool {
                idle: pool,
                live: workers,
            }),
            available: Condvar::new(),
            name,
        })
    }

    fn checkout(&self) -> Result<Worker, EvalError> {
        let mut pool = self.pool.lock().expect("pool lock");
        loop {
            if let Some(w) = pool.idle.pop() {
                return Ok(w);
            }
            if pool.live == 0 {
                return Err(EvalError::Handshake("no live workers left".into()));
            }
            pool = self.available.wait(pool).expect("pool lock");
        }
    }

    fn checkin(&self, worker: Worker) {
        self.pool.lock().expect("pool lock").idle.push(worker);
        self.available.notify_one();
    }

    fn retire(&self) {
        self.pool.lock().expect("pool lock").live -= 1;
        self.available.notify_all();
    }

    fn respawn(&self) -> Result<Worker, EvalError> {
        Worker::spawn(&self.cfg).inspect_err(|_| self.retire())
    }
}

impl Evaluator for External {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, request: &TrialRequest) -> Result<TrialResult, EvalError> {
        let timeout = Duration::from_secs_f64(self.cfg.timeout_secs);
        let started = Instant::now();
        let mut worker = self.checkout()?;
        let mut last = None;
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                // the old process may be hung or desynchronized
                drop(worker);
                worker = self.respawn()?;
            }
            match worker.attempt(request, timeout) {
                Ok(result) => {
                    self.checkin(worker);
                    return Ok(result);
                }
                Err(e) => last = Some(e),
            }
        }
        let elapsed = started.elapsed().as_secs_f64() / 60.0;
        let message = last.map(|e| e.to_string()).unwrap_or_default();
        // replace the bad worker before handing the slot back
        drop(worker);
        let replacement = self.respawn()?;
        self.checkin(replacement);
        Ok(TrialResult::failed(
            request.trial_id,
            elapsed,
            format!("{message} (after {} attempts)", self.cfg.retries + 1),
        ))
    }

    fn concurrency(&self) -> Option<usize> {
        Some(self.size)
    }

    fn clock(&self) -> Clock {
        Clock::Wall
    }
}
