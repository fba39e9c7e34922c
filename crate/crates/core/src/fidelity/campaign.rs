use super::{lift_config, CampaignError, CampaignSettings};
use crate::evaluators::{Clock, Evaluator};
use crate::optimizers::{Optimizer, StrategyConfig};
use crate::persistence::{Checkpoint, TrialLog, TrialRecord};
use crate::searchspace::{select_elites, Configuration, SearchSpace};
use crate::seed::{derive, Stream};
use crate::trial::{Status, Trial, TrialId, TrialRequest, TrialResult};
use std::collections::VecDeque;
use std::path::PathBuf;
use std::time::Instant;

/// Everything a finished campaign produced.
#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub trials: Vec<Trial>,
    pub records: Vec<TrialRecord>,
    /// Lowest-objective ok trial at the final fidelity.
    pub best: Option<Trial>,
    pub total_cost_minutes: f64,
    /// Search space of every stage that was started.
    pub spaces: Vec<SearchSpace>,
}

struct CheckpointSink {
    path: PathBuf,
    campaign: serde_json::Value,
}

/// A running campaign. See the module docs for the stage hand-off.
pub struct Campaign {
    root: SearchSpace,
    settings: CampaignSettings,
    stage: usize,
    space: SearchSpace,
    spaces: Vec<SearchSpace>,
    optimizer: Optimizer,
    stage_start: usize,
    warm: VecDeque<Configuration>,
    trials: Vec<Trial>,
    records: Vec<TrialRecord>,
    cum_cost: f64,
    replay: VecDeque<TrialRecord>,
    log: Option<TrialLog>,
    checkpoint: Option<CheckpointSink>,
    checkpoint_every: usize,
}

impl std::fmt::Debug for Campaign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Campaign")
            .field("stage", &self.stage)
            .field("trials", &self.trials.len())
            .field("pending_replay", &self.replay.len())
            .finish()
    }
}

impl Campaign {
    pub fn new(space: SearchSpace, settings: CampaignSettings) -> Result<Self, CampaignError> {
        settings.validate()?;
        for stage in settings.schedule.stages() {
            space.at_fidelity(stage.fidelity)?;
        }
        let first = settings.schedule.stages()[0].fidelity;
        let stage_space = space.at_fidelity(first)?;
        let optimizer = Optimizer::new(
            stage_space.clone(),
            &settings.strategy,
            derive(settings.seed, Stream::Optimizer, 0),
        )?;
        Ok(Self {
            root: space,
            settings,
            stage: 0,
            spaces: vec![stage_space.clone()],
            space: stage_space,
            optimizer,
            stage_start: 0,
            warm: VecDeque::new(),
            trials: Vec::new(),
            records: Vec::new(),
            cum_cost: 0.0,
            replay: VecDeque::new(),
            log: None,
            checkpoint: None,
            checkpoint_every: 50,
        })
    }

    /// A campaign that first replays `records` (verifying each suggestion
    /// against the log) and then continues normally.
    pub fn resume(
        space: SearchSpace,
        settings: CampaignSettings,
        records: Vec<TrialRecord>,
    ) -> Result<Self, CampaignError> {
        let mut c = Self::new(space, settings)?;
        c.replay = records.into();
        Ok(c)
    }

    /// Appends new records to `log`. Replayed records are assumed to be in
    /// it already.
    pub fn with_log(mut self, log: TrialLog) -> Self {
        self.log = Some(log);
        self
    }

    /// Writes a checkpoint at start, at every stage boundary, every
    /// `checkpoint_every` trials, at the end and before returning an error.
    pub fn with_checkpoint(mut self, path: PathBuf, campaign: serde_json::Value) -> Self {
        self.checkpoint = Some(CheckpointSink { path, campaign });
        self
    }

    pub fn settings(&self) -> &CampaignSettings {
        &self.settings
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    /// Warm-start configurations not yet evaluated in the current stage.
    pub fn pending_warm_starts(&self) -> &VecDeque<Configuration> {
        &self.warm
    }

    fn fidelity(&self) -> u32 {
        self.settings.schedule.stages()[self.stage].fidelity
    }

    fn stage_used(&self) -> usize {
        self.trials.len() - self.stage_start
    }

    fn stage_budget(&self) -> usize {
        self.settings.schedule.stages()[self.stage].budget
    }

    pub fn is_finished(&self) -> bool {
        self.stage + 1 == self.settings.schedule.stages().len() && self.stage_used() >= self.stage_budget()
    }

    fn write_checkpoint(&self) -> Result<(), CampaignError> {
        if let Some(sink) = &self.checkpoint {
            if let Some(log) = &self.log {
                log.sync()?;
            }
            Checkpoint::new(sink.campaign.clone(), &self.records, self.stage).write(&sink.path)?;
        }
        Ok(())
    }

    /// Runs to completion.
    pub fn run(self, evaluator: &dyn Evaluator) -> Result<CampaignResult, CampaignError> {
        self.run_for(evaluator, usize::MAX).map(|c| c.into_result())
    }

    /// Runs until the campaign finishes or `max_trials` trials exist in total.
    pub fn run_for(mut self, evaluator: &dyn Evaluator, max_trials: usize) -> Result<Self, CampaignError> {
        for stage in self.settings.schedule.stages() {
            if !evaluator.supports(stage.fidelity) {
                return Err(CampaignError::UnsupportedFidelity {
                    evaluator: evaluator.name().to_owned(),
                    fidelity: stage.fidelity,
                });
            }
        }
        if self.trials.is_empty() {
            self.write_checkpoint()?;
        }
        let started = Instant::now();
        let clock_offset = self.replay.back().map_or(0.0, |r| r.ts);
        while !self.is_finished() && self.trials.len() < max_trials {
            if self.stage_used() >= self.stage_budget() {
                if let Err(e) = self.advance_stage() {
                    self.write_checkpoint()?;
                    return Err(e);
                }
                continue;
            }
            if let Err(e) = self.step(evaluator, started, clock_offset, max_trials) {
                self.write_checkpoint()?;
                return Err(e);
            }
        }
        self.write_checkpoint()?;
        Ok(self)
    }

    /// Suggests, evaluates and reports one batch of up to `workers` trials.
    fn step(
        &mut self,
        evaluator: &dyn Evaluator,
        started: Instant,
        clock_offset: f64,
        max_trials: usize,
    ) -> Result<(), CampaignError> {
        let room = (self.stage_budget() - self.stage_used()).min(max_trials - self.trials.len());
        let k = self
            .settings
            .workers
            .min(evaluator.concurrency().unwrap_or(usize::MAX))
            .min(room)
            .max(1);
        let fidelity = self.fidelity();
        let first_id = self.trials.len() as TrialId + 1;

        // warm starts and fresh suggestions never share a batch, so every
        // warm start is reported before the optimizer's first suggestion
        let mut batch: Vec<TrialRequest> = Vec::with_capacity(k);
        let from_warm = !self.warm.is_empty();
        for j in 0..k as TrialId {
            let id = first_id + j;
            let config = if from_warm {
                match self.warm.pop_front() {
                    Some(c) => c,
                    None => break,
                }
            } else {
                self.optimizer.suggest(id)?
            };
            batch.push(TrialRequest {
                trial_id: id,
                fidelity,
                seed: derive(self.settings.seed, Stream::Evaluation, id),
                config,
            });
        }

        let mut results: Vec<Option<(TrialResult, Option<f64>)>> = vec![None; batch.len()];
        let mut live = Vec::new();
        for (slot, req) in batch.iter().enumerate() {
            match self.replay.pop_front() {
                Some(rec) => results[slot] = Some(self.check_replay(&rec, req)?),
                None => live.push(slot),
            }
        }
        if live.len() == 1 {
            let slot = live[0];
            results[slot] = Some((evaluator.evaluate(&batch[slot])?, None));
        } else if !live.is_empty() {
            let outcomes: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = live
                    .iter()
                    .map(|&slot| {
                        let req = &batch[slot];
                        s.spawn(move || evaluator.evaluate(req))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("evaluator thread panicked"))
                    .collect()
            });
            for (slot, outcome) in live.into_iter().zip(outcomes) {
                results[slot] = Some((outcome?, None));
            }
        }

        for (req, result) in batch.into_iter().zip(results) {
            let (result, replay_ts) = result.expect("every slot filled");
            let ts = replay_ts.unwrap_or_else(|| match evaluator.clock() {
                Clock::Simulated => self.cum_cost + result.cost_minutes,
                Clock::Wall => clock_offset + started.elapsed().as_secs_f64() / 60.0,
            });
            self.record(req, result, ts, replay_ts.is_some())?;
        }
        Ok(())
    }

    fn check_replay(&self, rec: &TrialRecord, req: &TrialRequest) -> Result<(TrialResult, Option<f64>), CampaignError> {
        let mismatch = |reason: String| CampaignError::ReplayMismatch {
            trial_id: req.trial_id,
            reason,
        };
        if rec.trial_id != req.trial_id {
            return Err(mismatch(format!("log has trial id {}", rec.trial_id)));
        }
        if rec.stage != self.stage || rec.fidelity != req.fidelity {
            return Err(mismatch(format!(
                "log has stage {} at fidelity {}, campaign is at stage {} fidelity {}",
                rec.stage, rec.fidelity, self.stage, req.fidelity
            )));
        }
        if rec.config != req.config {
            return Err(mismatch("configuration differs".into()));
        }
        if rec.seed != req.seed {
            return Err(mismatch("evaluation seed differs".into()));
        }
        let result = match (rec.status, rec.objective) {
            (Status::Ok, Some(y)) => TrialResult {
                message: rec.message.clone(),
                ..TrialResult::ok(rec.trial_id, y, rec.cost_minutes)
            },
            (Status::Failed, None) => TrialResult::failed(
                rec.trial_id,
                rec.cost_minutes,
                rec.message.clone().unwrap_or_default(),
            ),
            _ => return Err(mismatch("status and objective disagree".into())),
        };
        Ok((result, Some(rec.ts)))
    }

    /// Objective reported to the optimizer for a failed trial: 1.1 times the
    /// worst ok objective of the stage, or 1.0 before any ok trial.
    fn failure_objective(&self) -> f64 {
        self.trials[self.stage_start..]
            .iter()
            .filter_map(|t| t.objective)
            .fold(None, |acc: Option<f64>, y| Some(acc.map_or(y, |a| a.max(y))))
            .map_or(1.0, |w| w * 1.1)
    }

    fn record(&mut self, req: TrialRequest, result: TrialResult, ts: f64, replayed: bool) -> Result<(), CampaignError> {
        let objective = match result.status {
            Status::Ok => Some(result.objective),
            Status::Failed => None,
        };
        let reported = objective.unwrap_or_else(|| self.failure_objective());
        self.optimizer.report(req.trial_id, req.config.clone(), reported)?;
        self.cum_cost += result.cost_minutes;
        let trial = Trial {
            id: req.trial_id,
            stage: self.stage,
            fidelity: req.fidelity,
            config: req.config,
            objective,
            cost_minutes: result.cost_minutes,
            status: result.status,
            seed: req.seed,
        };
        let record = TrialRecord::from_trial(&trial, self.cum_cost, ts, result.message);
        if !replayed {
            if let Some(log) = &mut self.log {
                log.append(&record)?;
            }
        }
        self.trials.push(trial);
        self.records.push(record);
        if !replayed && self.trials.len().is_multiple_of(self.checkpoint_every) {
            self.write_checkpoint()?;
        }
        Ok(())
    }

    /// Moves to the next stage: refine around the finished stage's elites,
    /// re-bound coupled parameters, queue the top elites for re-evaluation
    /// and start a fresh optimizer.
    pub fn advance_stage(&mut self) -> Result<(), CampaignError> {
        let stages = self.settings.schedule.stages();
        if self.stage + 1 >= stages.len() {
            return Err(CampaignError::FinalStage);
        }
        let r = &self.settings.refinement;
        let from = stages[self.stage].fidelity;
        let to = stages[self.stage + 1].fidelity;
        let next_budget = stages[self.stage + 1].budget;
        let finished = &self.trials[self.stage_start..];
        let elites = select_elites(finished, r.q)?;
        let refined = self.space.refine(finished, r.q, r.margin)?;
        let next_space = refined.at_fidelity(to)?;
        let mut warm = VecDeque::new();
        for elite in elites.iter().take(r.k_warm.min(next_budget)) {
            let lifted = lift_config(&elite.config, from, to, &next_space);
            if !next_space.is_valid(&lifted) {
                return Err(CampaignError::LiftInvalid { fidelity: to });
            }
            warm.push_back(lifted);
        }
        self.stage += 1;
        self.stage_start = self.trials.len();
        self.optimizer = Optimizer::new(
            next_space.clone(),
            &self.settings.strategy,
            derive(self.settings.seed, Stream::Optimizer, self.stage as u64),
        )?;
        self.space = next_space.clone();
        self.spaces.push(next_space);
        self.warm = warm;
        if self.replay.is_empty() {
            self.write_checkpoint()?;
        }
        Ok(())
    }

    pub fn into_result(self) -> CampaignResult {
        let final_fidelity = self.settings.schedule.stages().last().expect("non-empty").fidelity;
        let best = self
            .trials
            .iter()
            .filter(|t| t.fidelity == final_fidelity)
            .filter_map(|t| t.objective.map(|y| (y, t)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)))
            .map(|(_, t)| t.clone());
        CampaignResult {
            total_cost_minutes: self.cum_cost,
            trials: self.trials,
            records: self.records,
            best,
            spaces: self.spaces,
        }
    }

    pub fn root_space(&self) -> &SearchSpace {
        &self.root
    }
}

/// The standard procedure: one optimizer, one fidelity, `budget` serial
/// suggest/evaluate/report cycles.
pub fn plain_loop(
    space: &SearchSpace,
    strategy: &StrategyConfig,
    evaluator: &dyn Evaluator,
    fidelity: u32,
    budget: usize,
    seed: u64,
) -> Result<Vec<TrialRecord>, CampaignError> {
    let space = space.at_fidelity(fidelity)?;
    let mut opt = Optimizer::new(space, strategy, derive(seed, Stream::Optimizer, 0))?;
    let mut records = Vec::with_capacity(budget);
    let mut cum = 0.0;
    let mut worst: Option<f64> = None;
    for id in 1..=budget as TrialId {
        let config = opt.suggest(id)?;
        let req = TrialRequest {
            trial_id: id,
            fidelity,
            seed: derive(seed, Stream::Evaluation, id),
            config,
        };
        let res = evaluator.evaluate(&req)?;
        let objective = res.is_ok().then_some(res.objective);
        if let Some(y) = objective {
            worst = Some(worst.map_or(y, |w: f64| w.max(y)));
        }
        opt.report(id, req.config.clone(), objective.unwrap_or(worst.map_or(1.0, |w| w * 1.1)))?;
        cum += res.cost_minutes;
        records.push(TrialRecord {
            trial_id: id,
            stage: 0,
            fidelity,
            config: req.config,
            objective,
            cost_minutes: res.cost_minutes,
            cum_cost_minutes: cum,
            status: res.status,
            seed: req.seed,
            ts: cum,
            message: res.message,
        });
    }
    Ok(records)
}
