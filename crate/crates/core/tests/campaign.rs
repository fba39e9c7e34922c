use iisopt::evaluators::{CnnMimic, EvalError, Evaluator, QuadraticMf};
use iisopt::fidelity::{plain_loop, Campaign, CampaignError, CampaignSettings, Schedule};
use iisopt::optimizers::{GaConfig, SmboConfig, StrategyConfig, TpeConfig};
use iisopt::persistence::{load_log, render_log, Checkpoint, CheckpointError, TrialLog};
use iisopt::searchspace::defaults::{cnn_space, quadratic_space, LEARNING_RATE};
use iisopt::searchspace::SpaceError;
use iisopt::{TrialRequest, TrialResult};
use serde_json::json;

fn quick() -> Vec<StrategyConfig> {
    vec![
        StrategyConfig::Random,
        StrategyConfig::Tpe(TpeConfig {
            n_startup: 8,
            ..TpeConfig::default()
        }),
        StrategyConfig::Smbo(SmboConfig {
            n_startup: 8,
            n_prior_candidates: 200,
            ..SmboConfig::default()
        }),
        StrategyConfig::Ga(GaConfig {
            population: 8,
            ..GaConfig::default()
        }),
    ]
}

fn settings(schedule: Vec<(u32, usize)>, strategy: StrategyConfig, seed: u64) -> CampaignSettings {
    CampaignSettings::new(Schedule::new(schedule).unwrap(), strategy, seed)
}

#[test]
fn single_stage_is_the_plain_loop() {
    for strategy in quick() {
        let space = cnn_space(64).unwrap();
        let s = settings(vec![(64, 40)], strategy.clone(), 5);
        let result = Campaign::new(space.clone(), s).unwrap().run(&CnnMimic::new()).unwrap();
        let plain = plain_loop(&space, &strategy, &CnnMimic::new(), 64, 40, 5).unwrap();
        assert_eq!(render_log(&result.records), render_log(&plain), "{}", strategy.name());

        let q = quadratic_space();
        let s = settings(vec![(10, 30)], strategy.clone(), 8);
        let result = Campaign::new(q.clone(), s).unwrap().run(&QuadraticMf::new(10)).unwrap();
        let plain = plain_loop(&q, &strategy, &QuadraticMf::new(10), 10, 30, 8).unwrap();
        assert_eq!(render_log(&result.records), render_log(&plain), "{}", strategy.name());
    }
}

#[test]
fn three_stage_protocol_runs_1500_trials() {
    let s = settings(vec![(32, 750), (64, 500), (128, 250)], StrategyConfig::Random, 1);
    let result = Campaign::new(cnn_space(128).unwrap(), s).unwrap().run(&CnnMimic::new()).unwrap();
    assert_eq!(result.trials.len(), 1500);
    for (stage, (fidelity, n)) in [(32, 750), (64, 500), (128, 250)].into_iter().enumerate() {
        let in_stage: Vec<_> = result.trials.iter().filter(|t| t.stage == stage).collect();
        assert_eq!(in_stage.len(), n);
        assert!(in_stage.iter().all(|t| t.fidelity == fidelity));
    }
    assert_eq!(result.best.unwrap().fidelity, 128);
    assert_eq!(result.spaces.len(), 3);
}

#[test]
fn boundary_queues_k_warm_reevaluations() {
    let s = settings(vec![(32, 750), (64, 500), (128, 250)], StrategyConfig::tpe(), 3);
    let mut campaign = Campaign::new(cnn_space(128).unwrap(), s)
        .unwrap()
        .run_for(&CnnMimic::new(), 750)
        .unwrap();
    assert_eq!(campaign.stage(), 0);
    campaign.advance_stage().unwrap();
    assert_eq!(campaign.stage(), 1);
    assert_eq!(campaign.pending_warm_starts().len(), 10);
    assert!(campaign.optimizer().history().is_empty());
    for c in campaign.pending_warm_starts() {
        assert!(campaign.space().is_valid(c));
    }
}

#[test]
fn warm_starts_are_capped_by_the_next_budget() {
    let s = settings(vec![(32, 100), (64, 4)], StrategyConfig::Random, 3);
    let mut campaign = Campaign::new(cnn_space(64).unwrap(), s)
        .unwrap()
        .run_for(&CnnMimic::new(), 100)
        .unwrap();
    campaign.advance_stage().unwrap();
    assert_eq!(campaign.pending_warm_starts().len(), 4);
    let result = campaign.run(&CnnMimic::new()).unwrap();
    assert_eq!(result.trials.len(), 104);
}

#[test]
fn advancing_past_the_last_stage_is_an_error() {
    let s = settings(vec![(32, 5)], StrategyConfig::Random, 3);
    let mut campaign = Campaign::new(cnn_space(32).unwrap(), s).unwrap().run_for(&CnnMimic::new(), 5).unwrap();
    assert!(matches!(campaign.advance_stage(), Err(CampaignError::FinalStage)));
}

#[test]
fn stage_invariants_hold_for_every_strategy() {
    let schedule = vec![(32, 60), (64, 40), (128, 30)];
    for strategy in quick() {
        let s = settings(schedule.clone(), strategy.clone(), 17);
        let result = Campaign::new(cnn_space(128).unwrap(), s).unwrap().run(&CnnMimic::new()).unwrap();
        let name = strategy.name();
        // budget conservation
        assert_eq!(result.trials.len(), 130, "{name}");
        // monotone fidelity
        assert!(result.trials.windows(2).all(|w| w[0].fidelity <= w[1].fidelity), "{name}");
        assert!(result.trials.iter().enumerate().all(|(i, t)| t.id == i as u64 + 1));
        // every trial validates in its own stage's space
        for t in &result.trials {
            assert!(result.spaces[t.stage].is_valid(&t.config), "{name}: trial {}", t.id);
        }
        // nesting of non-coupled numeric bounds
        for w in result.spaces.windows(2) {
            for (outer, inner) in w[0].params().iter().zip(w[1].params()) {
                if outer.resolution_coupled {
                    continue;
                }
                match (outer.bounds(), inner.bounds()) {
                    (Some((lo, hi)), Some((rlo, rhi))) => assert!(lo <= rlo && rhi <= hi, "{name}: {}", outer.name),
                    _ => {
                        let inner = inner.choices().unwrap();
                        assert!(inner.iter().all(|c| outer.choices().unwrap().contains(c)));
                    }
                }
            }
        }
        // cumulative cost is the prefix sum
        let mut cum = 0.0;
        for r in &result.records {
            cum += r.cost_minutes;
            assert_eq!(r.cum_cost_minutes, cum);
            assert_eq!(r.ts, cum);
        }
        assert_eq!(result.total_cost_minutes, cum);
    }
}

#[test]
fn warm_starts_lead_each_later_stage() {
    let s = settings(vec![(32, 60), (64, 40)], StrategyConfig::Random, 2);
    let result = Campaign::new(cnn_space(64).unwrap(), s).unwrap().run(&CnnMimic::new()).unwrap();
    let mut stage0: Vec<_> = result.trials[..60].iter().filter(|t| t.objective.is_some()).collect();
    stage0.sort_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()).then(a.id.cmp(&b.id)));
    // floor(0.15 * 60) = 9 elites, all of them re-evaluated first
    for (elite, warm) in stage0.iter().take(9).zip(&result.trials[60..69]) {
        assert_eq!(elite.config.get(LEARNING_RATE), warm.config.get(LEARNING_RATE));
    }
}

#[test]
fn unsupported_fidelity_is_rejected_up_front() {
    let s = settings(vec![(32, 5), (128, 5)], StrategyConfig::Random, 1);
    let err = Campaign::new(quadratic_space(), s).unwrap().run(&QuadraticMf::new(64)).unwrap_err();
    assert!(matches!(err, CampaignError::UnsupportedFidelity { fidelity: 128, .. }), "{err}");
}

struct AlwaysFails;

impl Evaluator for AlwaysFails {
    fn name(&self) -> &str {
        "always-fails"
    }

    fn evaluate(&self, request: &TrialRequest) -> Result<TrialResult, EvalError> {
        Ok(TrialResult::failed(request.trial_id, 0.5, "diverged"))
    }
}

#[test]
fn all_failed_stage_stops_with_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.jsonl");
    let cp_path = dir.path().join("cp.json");
    let s = settings(vec![(32, 12), (64, 5)], StrategyConfig::tpe(), 4);
    let err = Campaign::new(cnn_space(64).unwrap(), s)
        .unwrap()
        .with_log(TrialLog::create(&log_path).unwrap())
        .with_checkpoint(cp_path.clone(), json!({"note": "fails"}))
        .run(&AlwaysFails)
        .unwrap_err();
    assert!(
        matches!(err, CampaignError::Space(SpaceError::InsufficientElites { trials: 0, .. })),
        "{err}"
    );
    let records = load_log(&log_path).unwrap();
    assert_eq!(records.len(), 12);
    assert!(records.iter().all(|r| r.objective.is_none()));
    let cp = Checkpoint::read(&cp_path).unwrap();
    assert_eq!(cp.body.trials, 12);
    assert_eq!(cp.body.stage, 0);
    assert_eq!(cp.body.campaign, json!({"note": "fails"}));
    cp.verify_log(&records).unwrap();
}

#[test]
fn failed_trials_are_reported_as_worse_than_the_worst() {
    let s = settings(vec![(32, 6)], StrategyConfig::Random, 4);
    let campaign = Campaign::new(cnn_space(32).unwrap(), s).unwrap().run_for(&AlwaysFails, 6).unwrap();
    assert!(campaign.optimizer().history().iter().all(|o| o.objective == 1.0));
}

#[test]
fn checkpoints_follow_the_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.jsonl");
    let cp_path = dir.path().join("cp.json");
    let s = settings(vec![(32, 70), (64, 60)], StrategyConfig::Random, 9);
    let partial = Campaign::new(cnn_space(64).unwrap(), s.clone())
        .unwrap()
        .with_log(TrialLog::create(&log_path).unwrap())
        .with_checkpoint(cp_path.clone(), json!({}))
        .run_for(&CnnMimic::new(), 90)
        .unwrap();
    let cp = Checkpoint::read(&cp_path).unwrap();
    assert_eq!((cp.body.trials, cp.body.stage), (90, 1));
    cp.verify_log(partial.records()).unwrap();
    let done = partial.run(&CnnMimic::new()).unwrap();
    let cp = Checkpoint::read(&cp_path).unwrap();
    assert_eq!((cp.body.trials, cp.body.stage), (130, 1));
    cp.verify_log(&done.records).unwrap();
}

#[test]
fn resume_after_forty_of_a_hundred() {
    let dir = tempfile::tempdir().unwrap();
    let s = settings(vec![(64, 100)], StrategyConfig::Random, 21);
    let reference = Campaign::new(cnn_space(64).unwrap(), s.clone()).unwrap().run(&CnnMimic::new()).unwrap();

    let path = dir.path().join("log.jsonl");
    Campaign::new(cnn_space(64).unwrap(), s.clone())
        .unwrap()
        .with_log(TrialLog::create(&path).unwrap())
        .run_for(&CnnMimic::new(), 40)
        .unwrap();
    let (log, records) = TrialLog::open(&path).unwrap();
    assert_eq!(records.len(), 40);
    let resumed = Campaign::resume(cnn_space(64).unwrap(), s, records)
        .unwrap()
        .with_log(log)
        .run(&CnnMimic::new())
        .unwrap();
    assert_eq!(render_log(&resumed.records[40..]), render_log(&reference.records[40..]));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), render_log(&reference.records));
}

#[test]
fn resume_with_empty_log_is_a_fresh_campaign() {
    let s = settings(vec![(32, 20), (64, 10)], StrategyConfig::ga(), 6);
    let fresh = Campaign::new(cnn_space(64).unwrap(), s.clone()).unwrap().run(&CnnMimic::new()).unwrap();
    let resumed = Campaign::resume(cnn_space(64).unwrap(), s, Vec::new())
        .unwrap()
        .run(&CnnMimic::new())
        .unwrap();
    assert_eq!(render_log(&fresh.records), render_log(&resumed.records));
}

#[test]
fn resume_rejects_a_foreign_log() {
    let a = settings(vec![(32, 10)], StrategyConfig::Random, 1);
    let b = settings(vec![(32, 10)], StrategyConfig::Random, 2);
    let records = Campaign::new(cnn_space(32).unwrap(), a).unwrap().run(&CnnMimic::new()).unwrap().records;
    let err = Campaign::resume(cnn_space(32).unwrap(), b, records)
        .unwrap()
        .run(&CnnMimic::new())
        .unwrap_err();
    assert!(matches!(err, CampaignError::ReplayMismatch { trial_id: 1, .. }), "{err}");
}

#[test]
fn corrupt_checkpoint_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cp_path = dir.path().join("cp.json");
    let s = settings(vec![(32, 10)], StrategyConfig::Random, 1);
    Campaign::new(cnn_space(32).unwrap(), s)
        .unwrap()
        .with_checkpoint(cp_path.clone(), json!({"seed": 1}))
        .run(&CnnMimic::new())
        .unwrap();
    let text = std::fs::read_to_string(&cp_path).unwrap();
    let tampered = text.replacen("\"trials\": 10", "\"trials\": 9", 1);
    assert_ne!(tampered, text);
    std::fs::write(&cp_path, tampered).unwrap();
    assert!(matches!(Checkpoint::read(&cp_path), Err(CheckpointError::DigestMismatch)));
    std::fs::write(&cp_path, &text[..text.len() / 2]).unwrap();
    assert!(Checkpoint::read(&cp_path).is_err());
}

#[test]
fn parallel_random_matches_serial() {
    let serial = settings(vec![(32, 30), (64, 20)], StrategyConfig::Random, 12);
    let parallel = serial.clone().with_workers(4);
    let a = Campaign::new(cnn_space(64).unwrap(), serial).unwrap().run(&CnnMimic::new()).unwrap();
    let b = Campaign::new(cnn_space(64).unwrap(), parallel).unwrap().run(&CnnMimic::new()).unwrap();
    assert_eq!(render_log(&a.records), render_log(&b.records));
}

#[test]
fn parallel_ga_is_reproducible() {
    let s = settings(vec![(32, 40), (64, 20)], StrategyConfig::ga(), 12).with_workers(3);
    let a = Campaign::new(cnn_space(64).unwrap(), s.clone()).unwrap().run(&CnnMimic::new()).unwrap();
    let b = Campaign::new(cnn_space(64).unwrap(), s).unwrap().run(&CnnMimic::new()).unwrap();
    assert_eq!(render_log(&a.records), render_log(&b.records));
    assert_eq!(a.trials.len(), 60);
}
