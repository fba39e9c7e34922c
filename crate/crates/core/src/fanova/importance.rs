use super::{variance_contributions, FanovaError, ForestParams, ImportanceReport, RegressionForest};
use crate::searchspace::{SearchSpace, Value};
use crate::seed::rng_from;
use crate::trial::Trial;
use serde::Serialize;
use std::io::{self, Write};

pub const MIN_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceRow {
    pub subset: Vec<String>,
    pub fraction: f64,
    pub rank: usize,
}

/// A fitted importance model over a trial set.
#[derive(Debug, Clone)]
pub struct ImportanceAnalysis {
    pub names: Vec<String>,
    pub forest: RegressionForest,
    pub report: ImportanceReport,
}

pub fn analyze(
    trials: &[Trial],
    space: &SearchSpace,
    params: &ForestParams,
    max_order: usize,
    seed: u64,
) -> Result<ImportanceAnalysis, FanovaError> {
    let usable: Vec<&Trial> = trials.iter().filter(|t| t.is_ok()).collect();
    if usable.len() < MIN_TRIALS {
        return Err(FanovaError::TooFewTrials {
            found: usable.len(),
            needed: MIN_TRIALS,
        });
    }
    let mut x = Vec::with_capacity(usable.len());
    let mut y = Vec::with_capacity(usable.len());
    for t in usable {
        x.push(space.encode(&t.config).map_err(|_| FanovaError::InvalidTrial(t.id))?);
        y.push(t.objective.expect("usable trial has an objective"));
    }
    let forest = RegressionForest::fit(&x, &y, params, &mut rng_from(seed))?;
    let names = space.names();
    let report = variance_contributions(&forest, &names, max_order);
    Ok(ImportanceAnalysis {
        names,
        forest,
        report,
    })
}

/// The `top_n` most important subsets of at most two parameters under the
/// default analysis forest.
pub fn importance_table(
    trials: &[Trial],
    space: &SearchSpace,
    top_n: usize,
    seed: u64,
) -> Result<Vec<ImportanceRow>, FanovaError> {
    Ok(analyze(trials, space, &ForestParams::analysis(), 2, seed)?.table(top_n))
}

impl ImportanceAnalysis {
    pub fn table(&self, top_n: usize) -> Vec<ImportanceRow> {
        self.report
            .entries
            .iter()
            .take(top_n)
            .enumerate()
            .map(|(i, e)| ImportanceRow {
                subset: e.subset.clone(),
                fraction: e.fraction,
                rank: i + 1,
            })
            .collect()
    }

    fn dims_of(&self, subset: &[&str]) -> Result<Vec<usize>, FanovaError> {
        subset
            .iter()
            .map(|s| {
                self.names
                    .iter()
                    .position(|n| n == s)
                    .ok_or_else(|| FanovaError::UnknownParameter((*s).to_owned()))
            })
            .collect()
    }

    /// Forest marginal with the named parameters fixed at unit coordinates.
    pub fn marginal(&self, subset: &[&str], unit_values: &[f64]) -> Result<f64, FanovaError> {
        if subset.len() != unit_values.len() {
            return Err(FanovaError::ShapeMismatch);
        }
        let dims = self.dims_of(subset)?;
        Ok(self.forest.marginal(&dims, unit_values))
    }

    /// `(value, marginal)` at `points` evenly spaced cell centres of one
    /// parameter's unit range.
    pub fn marginal_curve(
        &self,
        space: &SearchSpace,
        name: &str,
        points: usize,
    ) -> Result<Vec<(Value, f64)>, FanovaError> {
        let param = space
            .param(name)
            .ok_or_else(|| FanovaError::UnknownParameter(name.to_owned()))?;
        let dims = self.dims_of(&[name])?;
        Ok((0..points)
            .map(|i| {
                let u = (i as f64 + 0.5) / points as f64;
                (param.from_unit(u), self.forest.marginal(&dims, &[u]))
            })
            .collect())
    }
}

pub fn write_table_csv<W: Write>(rows: &[ImportanceRow], mut out: W) -> io::Result<()> {
    writeln!(out, "subset,fraction,rank")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.subset.join("+"), r.fraction, r.rank)?;
    }
    Ok(())
}

pub fn write_table_json<W: Write>(rows: &[ImportanceRow], out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(io::Error::other)
}
