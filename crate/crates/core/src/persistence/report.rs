use super::TrialRecord;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Evaluations,
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("no ok trials")]
    NoOkTrials,
    #[error("minutes must be positive, got standard {standard} and iis {iis}")]
    NonPositive { standard: f64, iis: f64 },
    #[error("need at least one value")]
    Empty,
}

/// Running minimum of the objective against evaluation count or cumulative
/// cost. Failed trials move `x` forward without changing the minimum; no
/// point is emitted before the first ok trial.
pub fn best_so_far(records: &[TrialRecord], by: Axis) -> Result<Vec<CurvePoint>, ReportError> {
    let mut curve = Vec::with_capacity(records.len());
    let mut best = f64::INFINITY;
    let mut cost = 0.0;
    for (i, r) in records.iter().enumerate() {
        cost += r.cost_minutes;
        if let Some(y) = r.objective {
            best = best.min(y);
        }
        if best.is_finite() {
            let x = match by {
                Axis::Evaluations => (i + 1) as f64,
                Axis::Cost => cost,
            };
            curve.push(CurvePoint { x, best });
        }
    }
    if curve.is_empty() {
        return Err(ReportError::NoOkTrials);
    }
    Ok(curve)
}

/// One best-so-far curve per stage, each restarted at the stage's first
/// trial; `x` stays on the campaign-wide axis.
pub fn stage_curves(records: &[TrialRecord], by: Axis) -> BTreeMap<usize, Vec<CurvePoint>> {
    let mut out: BTreeMap<usize, Vec<CurvePoint>> = BTreeMap::new();
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cost = 0.0;
    for (i, r) in records.iter().enumerate() {
        cost += r.cost_minutes;
        let b = best.entry(r.stage).or_insert(f64::INFINITY);
        if let Some(y) = r.objective {
            *b = b.min(y);
        }
        if b.is_finite() {
            let x = match by {
                Axis::Evaluations => (i + 1) as f64,
                Axis::Cost => cost,
            };
            out.entry(r.stage).or_default().push(CurvePoint { x, best: *b });
        }
    }
    out
}

/// Cumulative cost at the first ok trial with objective `<= target`.
pub fn cost_to_reach(records: &[TrialRecord], target: f64) -> Option<f64> {
    let mut cost = 0.0;
    for r in records {
        cost += r.cost_minutes;
        if r.objective.is_some_and(|y| y <= target) {
            return Some(cost);
        }
    }
    None
}

/// Percent of time saved, rounded half up: `round(100 (1 - iis / standard))`.
pub fn time_reduction(standard_minutes: f64, iis_minutes: f64) -> Result<i64, ReportError> {
    if !(standard_minutes > 0.0 && iis_minutes > 0.0) {
        return Err(ReportError::NonPositive {
            standard: standard_minutes,
            iis: iis_minutes,
        });
    }
    Ok((100.0 * (1.0 - iis_minutes / standard_minutes) + 0.5).floor() as i64)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_and_stddev(values: &[f64]) -> Result<(f64, f64), ReportError> {
    if values.is_empty() {
        return Err(ReportError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub evaluations: usize,
    pub failed: usize,
    pub total_cost_minutes: f64,
    pub final_fidelity: u32,
    /// Best ok objective at the final fidelity.
    pub best_objective: Option<f64>,
    pub best_trial: Option<u64>,
    /// `(fidelity, evaluations)` per stage, in stage order.
    pub stages: Vec<(u32, usize)>,
}

pub fn summarize(records: &[TrialRecord]) -> Result<CampaignSummary, ReportError> {
    let last = records.last().ok_or(ReportError::Empty)?;
    let final_fidelity = records.iter().map(|r| r.fidelity).max().unwrap_or(last.fidelity);
    let best = records
        .iter()
        .filter(|r| r.fidelity == final_fidelity)
        .filter_map(|r| r.objective.map(|y| (y, r.trial_id)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut stages: Vec<(u32, usize)> = Vec::new();
    let mut current = None;
    for r in records {
        if current != Some(r.stage) {
            stages.push((r.fidelity, 0));
            current = Some(r.stage);
        }
        stages.last_mut().expect("pushed").1 += 1;
    }
    Ok(CampaignSummary {
        evaluations: records.len(),
        failed: records.iter().filter(|r| r.objective.is_none()).count(),
        total_cost_minutes: records.iter().map(|r| r.cost_minutes).sum(),
        final_fidelity,
        best_objective: best.map(|b| b.0),
        best_trial: best.map(|b| b.1),
        stages,
    })
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], x_label: &str, mut out: W) -> io::Result<()> {
    writeln!(out, "{x_label},best")?;
    for p in curve {
        writeln!(out, "{},{}", p.x, p.best)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::tests::record;
    use super::*;

    fn records(objectives: &[Option<f64>], costs: &[f64]) -> Vec<TrialRecord> {
        let mut cum = 0.0;
        objectives
            .iter()
            .zip(costs)
            .enumerate()
            .map(|(i, (&y, &c))| {
                cum += c;
                record(i as u64 + 1, y, c, cum)
            })
            .collect()
    }

    fn xy(curve: &[CurvePoint]) -> Vec<(f64, f64)> {
        curve.iter().map(|p| (p.x, p.best)).collect()
    }

    #[test]
    fn running_minimum() {
        let r = records(&[Some(5.0), Some(3.0), Some(4.0), Some(2.0)], &[1.0, 1.0, 2.0, 1.0]);
        assert_eq!(
            xy(&best_so_far(&r, Axis::Evaluations).unwrap()),
            vec![(1.0, 5.0), (2.0, 3.0), (3.0, 3.0), (4.0, 2.0)]
        );
        let xs: Vec<f64> = best_so_far(&r, Axis::Cost).unwrap().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 4.0, 5.0]);
        let one = records(&[Some(1.0)], &[1.0]);
        assert_eq!(best_so_far(&one, Axis::Evaluations).unwrap().len(), 1);
    }

    #[test]
    fn failures_advance_x_only() {
        let r = records(&[None, Some(3.0), None, Some(4.0)], &[1.0; 4]);
        assert_eq!(
            xy(&best_so_far(&r, Axis::Evaluations).unwrap()),
            vec![(2.0, 3.0), (3.0, 3.0), (4.0, 3.0)]
        );
        let all_failed = records(&[None, None], &[1.0; 2]);
        assert_eq!(best_so_far(&all_failed, Axis::Cost), Err(ReportError::NoOkTrials));
    }

    #[test]
    fn table_one_rows() {
        let rows = [(2974.0, 2396.0, 19), (3822.0, 2230.0, 42), (3197.0, 2069.0, 35), (4043.0, 3662.0, 9)];
        for (s, i, pct) in rows {
            assert_eq!(time_reduction(s, i).unwrap(), pct);
        }
        assert_eq!(time_reduction(17.5, 17.5).unwrap(), 0);
        assert!(time_reduction(0.0, 1.0).is_err());
        assert!(time_reduction(1.0, -1.0).is_err());
        // exact half rounds up
        assert_eq!(time_reduction(200.0, 199.0).unwrap(), 1);
    }

    #[test]
    fn summary_uses_final_fidelity() {
        let mut r = records(&[Some(0.1), Some(0.5), Some(0.4)], &[1.0; 3]);
        r[1].fidelity = 64;
        r[1].stage = 1;
        r[2].fidelity = 64;
        r[2].stage = 1;
        let s = summarize(&r).unwrap();
        assert_eq!(s.best_objective, Some(0.4));
        assert_eq!(s.best_trial, Some(3));
        assert_eq!(s.stages, vec![(32, 1), (64, 2)]);
        assert_eq!(s.total_cost_minutes, 3.0);
    }

    #[test]
    fn cost_to_target() {
        let r = records(&[Some(0.5), Some(0.3), Some(0.2)], &[1.0, 2.0, 3.0]);
        assert_eq!(cost_to_reach(&r, 0.3), Some(3.0));
        assert_eq!(cost_to_reach(&r, 0.1), None);
    }

    #[test]
    fn stddev() {
        let (m, s) = mean_and_stddev(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_and_stddev(&[4.0]).unwrap(), (4.0, 0.0));
    }
}
