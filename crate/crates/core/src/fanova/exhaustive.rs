//! Classical ANOVA over a full factorial table, by direct summation.
//!
//! This is the reference the tree-based decomposition is checked against: it
//! never builds a tree and weights every cell of the table equally.

use super::decompose::combinations;
use super::{FanovaError, ImportanceReport, SubsetImportance};
use std::collections::HashMap;

const MAX_CELLS: usize = 1_000_000;

/// Objective values for every combination of factor levels, row-major with
/// the last factor varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorialTable {
    names: Vec<String>,
    levels: Vec<usize>,
    values: Vec<f64>,
}

impl FactorialTable {
    pub fn from_fn(
        names: Vec<String>,
        levels: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, FanovaError> {
        let total = Self::check_shape(&names, &levels)?;
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; levels.len()];
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..levels.len()).rev() {
                idx[k] = rem % levels[k];
                rem /= levels[k];
            }
            values.push(f(&idx));
        }
        Ok(Self {
            names,
            levels,
            values,
        })
    }

    /// Builds a table from explicit cells; every combination must be present.
    pub fn from_cells(
        names: Vec<String>,
        levels: Vec<usize>,
        cells: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self, FanovaError> {
        let total = Self::check_shape(&names, &levels)?;
        let mut values = vec![None; total];
        for (idx, v) in cells {
            if idx.len() != levels.len() || idx.iter().zip(&levels).any(|(i, l)| i >= l) {
                return Err(FanovaError::ShapeMismatch);
            }
            let flat = idx.iter().zip(&levels).fold(0, |acc, (i, l)| acc * l + i);
            values[flat] = Some(v);
        }
        let values = values
            .into_iter()
            .collect::<Option<Vec<f64>>>()
            .ok_or(FanovaError::MissingCells)?;
        Ok(Self {
            names,
            levels,
            values,
        })
    }

    fn check_shape(names: &[String], levels: &[usize]) -> Result<usize, FanovaError> {
        if names.len() != levels.len() || levels.is_empty() || levels.contains(&0) {
            return Err(FanovaError::ShapeMismatch);
        }
        let total = levels
            .iter()
            .try_fold(1usize, |acc, &l| acc.checked_mul(l))
            .filter(|&t| t <= MAX_CELLS)
            .ok_or(FanovaError::TooManyCells)?;
        Ok(total)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// `(multi-index, value)` for every cell.
    pub fn cells(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.values.iter().enumerate().map(|(flat, &v)| {
            let mut idx = vec![0usize; self.levels.len()];
            let mut rem = flat;
            for k in (0..self.levels.len()).rev() {
                idx[k] = rem % self.levels[k];
                rem /= self.levels[k];
            }
            (idx, v)
        })
    }
}

pub fn exhaustive_decomposition(table: &FactorialTable, max_order: usize) -> ImportanceReport {
    let d = table.levels.len();
    let n = table.values.len() as f64;
    let mean = table.values.iter().sum::<f64>() / n;
    let total_variance = table.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cells: Vec<(Vec<usize>, f64)> = table.cells().collect();

    let all: Vec<usize> = (0..d).collect();
    let mut effects: HashMap<Vec<usize>, HashMap<Vec<usize>, f64>> = HashMap::new();
    let mut entries = Vec::new();
    for k in 1..=max_order.max(1).min(d) {
        for subset in combinations(&all, k) {
            // marginal means over the subset's levels
            let mut sums: HashMap<Vec<usize>, (f64, usize)> = HashMap::new();
            for (idx, v) in &cells {
                let key: Vec<usize> = subset.iter().map(|&s| idx[s]).collect();
                let e = sums.entry(key).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            let mut effect = HashMap::new();
            for (key, (sum, count)) in sums {
                let mut value = sum / count as f64 - mean;
                for w in 1..k {
                    for positions in combinations(&(0..k).collect::<Vec<_>>(), w) {
                        let lower: Vec<usize> = positions.iter().map(|&p| subset[p]).collect();
                        let lower_key: Vec<usize> = positions.iter().map(|&p| key[p]).collect();
                        value -= effects[&lower][&lower_key];
                    }
                }
                effect.insert(key, value);
            }
            let variance = effect.values().map(|v| v * v).sum::<f64>() / effect.len() as f64;
            let fraction = if total_variance < super::decompose::ZERO_VARIANCE {
                0.0
            } else {
                variance / total_variance
            };
            entries.push(SubsetImportance {
                subset: subset.iter().map(|&s| table.names[s].clone()).collect(),
                dims: subset.clone(),
                fraction,
            });
            effects.insert(subset, effect);
        }
    }
    entries.sort_by(|a, b| b.fraction.total_cmp(&a.fraction));
    ImportanceReport {
        entries,
        total_variance,
    }
}
