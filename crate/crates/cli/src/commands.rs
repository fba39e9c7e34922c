use anyhow::{anyhow, bail, Context, Result};
use iisopt::config::{CampaignConfig, ConfigError};
use iisopt::evaluators::Evaluator;
use iisopt::fanova::{importance_table, write_table_csv, write_table_json, ImportanceRow};
use iisopt::fidelity::{Campaign, CampaignResult};
use iisopt::persistence::{
    best_so_far, load_log, mean_and_stddev, stage_curves, summarize, time_reduction, write_curve_csv, Axis,
    Checkpoint, TrialLog, TrialRecord,
};
use iisopt::Trial;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_config(&text, path)
}

fn parse_config(text: &str, path: &Path) -> Result<CampaignConfig> {
    CampaignConfig::from_json(text).map_err(|e| match e {
        ConfigError::Schema { line, column, message } => {
            let source = text.lines().nth(line.saturating_sub(1)).unwrap_or("");
            anyhow!("{}:{line}:{column}: {message}\n  | {source}", path.display())
        }
        other => anyhow!("{}: {other}", path.display()),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn stem_path(path: &Path) -> PathBuf {
    path.with_extension("")
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = BufWriter::new(file);
    f(&mut out)
        .and_then(|_| out.flush())
        .with_context(|| format!("cannot write {}", path.display()))
}

/// Runs to completion, stopping at each stage end to report progress when
/// `verbose`.
fn drive(mut campaign: Campaign, evaluator: &dyn Evaluator, verbose: bool) -> Result<CampaignResult> {
    if !verbose {
        return Ok(campaign.run(evaluator)?);
    }
    let stages = campaign.settings().schedule.stages().to_vec();
    let mut end = 0;
    for (i, stage) in stages.iter().enumerate() {
        end += stage.budget;
        campaign = campaign.run_for(evaluator, end)?;
        let best = campaign.trials()[end - stage.budget..]
            .iter()
            .filter_map(|t| t.objective)
            .fold(f64::INFINITY, f64::min);
        let cost = campaign.records().last().map_or(0.0, |r| r.cum_cost_minutes);
        eprintln!(
            "stage {} at fidelity {}: {} trials, stage best {best}, cumulative cost {cost:.1} min",
            i + 1,
            stage.fidelity,
            stage.budget
        );
    }
    Ok(campaign.run(evaluator)?)
}

fn finish(cfg: &CampaignConfig, result: &CampaignResult, log: &Path) -> Result<()> {
    let summary = summarize(&result.records)?;
    let doc = json!({
        "strategy": cfg.strategy.name(),
        "seed": cfg.seed,
        "schedule": cfg.schedule,
        "summary": summary,
        "best_config": result.best.as_ref().map(|t| &t.config),
    });
    let path = with_suffix(&stem_path(log), ".summary.json");
    write_file(&path, |out| {
        serde_json::to_writer_pretty(&mut *out, &doc)?;
        writeln!(out)
    })?;
    match (summary.best_objective, summary.best_trial) {
        (Some(y), Some(id)) => println!("best objective {y} (trial {id}) at fidelity {}", summary.final_fidelity),
        _ => println!("no successful trial at fidelity {}", summary.final_fidelity),
    }
    println!(
        "{} evaluations ({} failed), total cost {:.2} minutes",
        summary.evaluations, summary.failed, summary.total_cost_minutes
    );
    println!("summary written to {}", path.display());
    Ok(())
}

pub fn run(
    config: &Path,
    seed: Option<u64>,
    workers: Option<usize>,
    log: &Path,
    checkpoint: Option<PathBuf>,
    verbose: bool,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(workers) = workers {
        cfg.workers = workers;
    }
    cfg.settings().validate()?;
    if log.exists() {
        bail!("{} already exists; use `resume` to continue it", log.display());
    }
    let checkpoint = checkpoint.unwrap_or_else(|| with_suffix(log, ".checkpoint.json"));
    let space = cfg.space()?;
    let evaluator = cfg.evaluator.build(cfg.workers)?;
    if verbose {
        eprintln!(
            "running {} on {} with seed {}, checkpoint {}",
            cfg.strategy.name(),
            evaluator.name(),
            cfg.seed,
            checkpoint.display()
        );
    }
    let campaign = Campaign::new(space, cfg.settings())?
        .with_log(TrialLog::create(log)?)
        .with_checkpoint(checkpoint, cfg.to_value());
    let result = drive(campaign, evaluator.as_ref(), verbose)?;
    finish(&cfg, &result, log)
}

pub fn resume(checkpoint: &Path, log: &Path, verbose: bool) -> Result<()> {
    let cp = Checkpoint::read(checkpoint).with_context(|| format!("cannot resume from {}", checkpoint.display()))?;
    let cfg = parse_config(&cp.body.campaign.to_string(), checkpoint)?;
    cp.verify_log(&load_log(log)?)
        .with_context(|| format!("{} does not belong to {}", log.display(), checkpoint.display()))?;
    let (writer, records) = TrialLog::open(log)?;
    if verbose {
        eprintln!("replaying {} logged trials", records.len());
    }
    let evaluator = cfg.evaluator.build(cfg.workers)?;
    let campaign = Campaign::resume(cfg.space()?, cfg.settings(), records)?
        .with_log(writer)
        .with_checkpoint(checkpoint.to_owned(), cp.body.campaign.clone());
    let result = drive(campaign, evaluator.as_ref(), verbose)?;
    finish(&cfg, &result, log)
}

pub fn analyze(
    config: &Path,
    log: &Path,
    top_n: usize,
    seed: Option<u64>,
    fidelity: Option<u32>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let space = cfg.space()?;
    let records = load_log(log)?;
    let fidelity = match fidelity.or_else(|| records.iter().map(|r| r.fidelity).max()) {
        Some(f) => f,
        None => bail!("{} has no trials", log.display()),
    };
    let trials: Vec<Trial> = records
        .iter()
        .filter(|r| r.fidelity == fidelity)
        .map(TrialRecord::to_trial)
        .collect();
    let rows = importance_table(&trials, &space, top_n, seed.unwrap_or(cfg.seed))
        .with_context(|| format!("cannot analyze {} at fidelity {fidelity}", log.display()))?;
    let prefix = out.unwrap_or_else(|| stem_path(log));
    let csv = with_suffix(&prefix, ".importance.csv");
    let json = with_suffix(&prefix, ".importance.json");
    write_file(&csv, |w| write_table_csv(&rows, w))?;
    write_file(&json, |w| write_table_json(&rows, &mut *w).and_then(|_| writeln!(w)))?;
    print_importance(&rows, trials.len(), fidelity);
    println!("written {} and {}", csv.display(), json.display());
    Ok(())
}

fn print_importance(rows: &[ImportanceRow], n: usize, fidelity: u32) {
    println!("importance over {n} trials at fidelity {fidelity}");
    for r in rows {
        println!("{:>4}  {:>7.2}%  {}", r.rank, 100.0 * r.fraction, r.subset.join(" x "));
    }
}

struct Arm {
    name: &'static str,
    minutes: Vec<f64>,
    best: Vec<f64>,
    logs: Vec<Value>,
}

fn load_arm(name: &'static str, paths: &[PathBuf], out_dir: &Path) -> Result<Arm> {
    let mut arm = Arm {
        name,
        minutes: Vec::new(),
        best: Vec::new(),
        logs: Vec::new(),
    };
    for (i, path) in paths.iter().enumerate() {
        let records = load_log(path)?;
        if records.is_empty() {
            bail!("{} has no trials", path.display());
        }
        let summary = summarize(&records)?;
        let by_evals = best_so_far(&records, Axis::Evaluations).with_context(|| path.display().to_string())?;
        let by_cost = best_so_far(&records, Axis::Cost)?;
        let evals_csv = out_dir.join(format!("{name}-{}.evaluations.csv", i + 1));
        let cost_csv = out_dir.join(format!("{name}-{}.minutes.csv", i + 1));
        write_file(&evals_csv, |w| write_curve_csv(&by_evals, "evaluations", w))?;
        write_file(&cost_csv, |w| write_curve_csv(&by_cost, "minutes", w))?;
        if let Some(best) = summary.best_objective {
            arm.best.push(best);
        }
        arm.minutes.push(summary.total_cost_minutes);
        arm.logs.push(json!({
            "log": path,
            "summary": summary,
            "curves": {"evaluations": evals_csv, "minutes": cost_csv},
            "stage_curves_by_minutes": stage_curves(&records, Axis::Cost),
        }));
    }
    Ok(arm)
}

fn arm_json(arm: &Arm) -> Result<Value> {
    let (minutes, minutes_sd) = mean_and_stddev(&arm.minutes)?;
    let best = mean_and_stddev(&arm.best).ok();
    Ok(json!({
        "repetitions": arm.minutes.len(),
        "minutes_mean": minutes,
        "minutes_stddev_over_repetitions": minutes_sd,
        "best_objective_mean": best.map(|b| b.0),
        "best_objective_stddev_over_repetitions": best.map(|b| b.1),
        "logs": arm.logs,
    }))
}

pub fn report(standard: &[PathBuf], iis: &[PathBuf], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let arms = [load_arm("standard", standard, out_dir)?, load_arm("iis", iis, out_dir)?];
    let (standard_minutes, _) = mean_and_stddev(&arms[0].minutes)?;
    let (iis_minutes, _) = mean_and_stddev(&arms[1].minutes)?;
    let reduction = time_reduction(standard_minutes, iis_minutes)?;
    let doc = json!({
        "standard": arm_json(&arms[0])?,
        "iis": arm_json(&arms[1])?,
        "time_reduction_percent": reduction,
    });
    let path = out_dir.join("report.json");
    write_file(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)
    })?;

    println!("{:<10} {:>32} {:>32}", "", "minutes", "best objective");
    for arm in &arms {
        let (m, m_sd) = mean_and_stddev(&arm.minutes)?;
        let best = match mean_and_stddev(&arm.best) {
            Ok((b, b_sd)) => format!("{b:.4} ± {b_sd:.4}"),
            Err(_) => "-".to_owned(),
        };
        println!("{:<10} {:>32} {:>32}", arm.name, format!("{m:.1} ± {m_sd:.1}"), best);
    }
    println!("(± is the stddev over repetitions)");
    println!("time reduction: {reduction}%");
    println!("written {}", path.display());
    Ok(())
}
