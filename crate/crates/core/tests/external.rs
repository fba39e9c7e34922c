use iisopt::evaluators::{Clock, EvalError, Evaluator, EvaluatorConfig, External, ExternalConfig};
use iisopt::fidelity::{Campaign, CampaignSettings, Schedule};
use iisopt::optimizers::StrategyConfig;
use iisopt::searchspace::defaults::quadratic_space;
use iisopt::{Configuration, Status, TrialRequest};
use std::collections::BTreeSet;
use std::time::Instant;

fn worker(mode: &str) -> ExternalConfig {
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/worker.py");
    ExternalConfig::new(vec!["python3".into(), script.into(), mode.into()])
}

fn request(id: u64) -> TrialRequest {
    let config: Configuration = [("x1", 0.5), ("x2", 0.25)].into_iter().collect();
    TrialRequest {
        trial_id: id,
        config,
        fidelity: 16,
        seed: 99,
    }
}

#[test]
fn handshake_names_the_evaluator() {
    let ext = External::start(worker("echo"), 1).unwrap();
    assert_eq!(ext.name(), "fixture-echo");
    assert_eq!(ext.concurrency(), Some(1));
    assert_eq!(ext.clock(), Clock::Wall);
}

#[test]
fn echoes_trial_id_and_passes_values_through() {
    let ext = External::start(worker("fixed"), 1).unwrap();
    let r = ext.evaluate(&request(7)).unwrap();
    assert_eq!(r.trial_id, 7);
    assert_eq!(r.status, Status::Ok);
    assert_eq!(r.objective, 0.42);
    assert_eq!(r.cost_minutes, 3.5);
    // the same process keeps serving
    assert_eq!(ext.evaluate(&request(8)).unwrap().trial_id, 8);
}

#[test]
fn mismatched_id_is_a_failed_trial() {
    let ext = External::start(worker("mismatch"), 1).unwrap();
    let r = ext.evaluate(&request(7)).unwrap();
    assert_eq!(r.status, Status::Failed);
    let msg = r.message.unwrap();
    assert!(msg.contains("protocol error") && msg.contains("after 2 attempts"), "{msg}");
}

#[test]
fn silent_worker_times_out_after_retry() {
    let ext = External::start(worker("silent").with_timeout(0.3), 1).unwrap();
    let started = Instant::now();
    let r = ext.evaluate(&request(1)).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(r.status, Status::Failed);
    assert!(r.message.unwrap().contains("timed out"));
    assert!(secs >= 0.6, "{secs}");
    assert!(r.cost_minutes > 0.0);
    // a fresh worker replaced the hung one
    assert_eq!(ext.evaluate(&request(2)).unwrap().status, Status::Failed);
}

#[test]
fn crash_carries_exit_status_and_stderr() {
    let ext = External::start(worker("crash"), 1).unwrap();
    let r = ext.evaluate(&request(3)).unwrap();
    assert_eq!(r.status, Status::Failed);
    let msg = r.message.unwrap();
    assert!(msg.contains("crashed") && msg.contains("out of memory"), "{msg}");
}

#[test]
fn garbage_is_malformed() {
    let ext = External::start(worker("garbage"), 1).unwrap();
    let r = ext.evaluate(&request(3)).unwrap();
    assert_eq!(r.status, Status::Failed);
    assert!(r.message.unwrap().contains("malformed"));
}

#[test]
fn retry_recovers_from_one_crash() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("crashed");
    let mut cfg = worker("crash-once");
    cfg.command.push(marker.display().to_string());
    let ext = External::start(cfg, 1).unwrap();
    let r = ext.evaluate(&request(4)).unwrap();
    assert_eq!((r.status, r.objective, r.cost_minutes), (Status::Ok, 0.25, 2.0));
    assert!(marker.exists());
}

#[test]
fn no_retries_means_one_attempt() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = worker("crash-once");
    cfg.command.push(dir.path().join("m").display().to_string());
    cfg.retries = 0;
    let ext = External::start(cfg, 1).unwrap();
    let r = ext.evaluate(&request(4)).unwrap();
    assert_eq!(r.status, Status::Failed);
    assert!(r.message.unwrap().contains("after 1 attempts"));
    assert_eq!(ext.evaluate(&request(5)).unwrap().status, Status::Ok);
}

#[test]
fn worker_reported_failure_is_passed_through() {
    let ext = External::start(worker("reports-failure"), 1).unwrap();
    let r = ext.evaluate(&request(2)).unwrap();
    assert_eq!(r.status, Status::Failed);
    assert_eq!(r.cost_minutes, 0.5);
    assert_eq!(r.message.as_deref(), Some("spatial collapse"));
}

#[test]
fn startup_errors() {
    let missing = ExternalConfig::new(vec!["/nonexistent/worker-binary".into()]);
    assert!(matches!(External::start(missing, 1), Err(EvalError::Spawn { .. })));
    assert!(matches!(External::start(ExternalConfig::new(vec![]), 1), Err(EvalError::Spawn { .. })));
    assert!(matches!(External::start(worker("bad-protocol"), 1), Err(EvalError::Handshake(_))));
    let mut slow = worker("no-handshake");
    slow.handshake_timeout_secs = 0.3;
    assert!(matches!(External::start(slow, 1), Err(EvalError::Handshake(_))));
    let exits = ExternalConfig::new(vec!["true".into()]);
    assert!(matches!(External::start(exits, 1), Err(EvalError::Handshake(_))));
}

#[test]
fn config_block_builds_a_pool() {
    let cfg: EvaluatorConfig = serde_json::from_value(serde_json::json!({
        "kind": "external",
        "command": worker("echo").command,
        "timeout_secs": 5
    }))
    .unwrap();
    let ext = cfg.build(2).unwrap();
    assert_eq!(ext.concurrency(), Some(2));
    assert_eq!(ext.evaluate(&request(1)).unwrap().objective, 0.25 + 0.016);
}

#[test]
fn concurrent_batches_use_distinct_processes() {
    let ext = External::start(worker("slow"), 3).unwrap();
    let settings = CampaignSettings::new(Schedule::single(8, 9), StrategyConfig::Random, 1).with_workers(3);
    let result = Campaign::new(quadratic_space(), settings).unwrap().run(&ext).unwrap();
    assert_eq!(result.trials.len(), 9);
    for batch in result.records.chunks(3) {
        let pids: BTreeSet<_> = batch.iter().map(|r| r.message.clone().unwrap()).collect();
        assert_eq!(pids.len(), 3, "{pids:?}");
    }
    assert!(result.records.windows(2).all(|w| w[0].ts <= w[1].ts));
    assert!(result.records.iter().all(|r| r.ts > 0.0));
}

#[test]
fn campaign_treats_timeouts_as_failed_trials() {
    let ext = External::start(worker("silent").with_timeout(0.2), 1).unwrap();
    let settings = CampaignSettings::new(Schedule::single(8, 2), StrategyConfig::tpe(), 1);
    let result = Campaign::new(quadratic_space(), settings).unwrap().run(&ext).unwrap();
    assert!(result.records.iter().all(|r| r.status == Status::Failed && r.objective.is_none()));
    assert!(result.best.is_none());
}
