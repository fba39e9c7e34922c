//! Exact functional-ANOVA decomposition of tree partitions.
//!
//! A tree is piecewise constant on a product grid whose edges along each
//! dimension are that tree's split thresholds. The marginal over a subset `U`
//! is therefore constant on the cells of the grid restricted to `U`, and each
//! component and its variance can be computed by summing over those cells.

use super::forest::{LeafBox, PartitionTree, RegressionForest};
use super::{ImportanceReport, SubsetImportance};
use std::collections::HashMap;

/// Trees whose total variance is below this contribute zero to every fraction.
pub const ZERO_VARIANCE: f64 = 1e-12;

struct Grid {
    edges: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Grid {
    fn shape(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.len() - 1).collect()
    }

    fn cell_volume(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .zip(&self.edges)
            .map(|(&i, e)| e[i + 1] - e[i])
            .product()
    }
}

/// Row-major iteration over a multi-index.
fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    let mut flat = 0;
    loop {
        f(flat, &idx);
        flat += 1;
        let mut k = shape.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn flat_index(shape: &[usize], idx: impl Iterator<Item = usize>) -> usize {
    let mut flat = 0;
    for (s, i) in shape.iter().zip(idx) {
        flat = flat * s + i;
    }
    flat
}

/// Subsets of `items` with exactly `k` elements, in lexicographic order.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(items: &[usize], k: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - current.len() {
                break;
            }
            current.push(items[i]);
            rec(items, k, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, k, 0, &mut current, &mut out);
    out
}

/// Variance components of one tree.
pub struct TreeDecomposition {
    pub mean: f64,
    pub total_variance: f64,
    /// `V_U` for every subset of split dimensions up to the requested order.
    /// Subsets touching a dimension the tree never splits have `V_U = 0` and
    /// are omitted.
    pub components: HashMap<Vec<usize>, f64>,
}

fn edges_for(thresholds: &[Vec<f64>], dims: &[usize]) -> Vec<Vec<f64>> {
    dims.iter()
        .map(|&d| {
            let mut e = Vec::with_capacity(thresholds[d].len() + 2);
            e.push(0.0);
            e.extend(thresholds[d].iter().copied().filter(|&t| t > 0.0 && t < 1.0));
            e.push(1.0);
            e
        })
        .collect()
}

/// The marginal prediction over `dims` on every cell of the tree's grid.
fn marginal_grid(leaves: &[LeafBox], thresholds: &[Vec<f64>], dims: &[usize]) -> Grid {
    let edges = edges_for(thresholds, dims);
    let shape: Vec<usize> = edges.iter().map(|e| e.len() - 1).collect();
    let mut values = vec![0.0; shape.iter().product()];
    let mut ranges = vec![(0usize, 0usize); dims.len()];
    for leaf in leaves {
        for (j, &d) in dims.iter().enumerate() {
            let lo = edges[j].partition_point(|&e| e < leaf.lower[d]);
            let hi = edges[j].partition_point(|&e| e < leaf.upper[d]);
            ranges[j] = (lo, hi);
        }
        let weight = leaf.value * leaf.volume_outside(dims);
        let sub_shape: Vec<usize> = ranges.iter().map(|(lo, hi)| hi - lo).collect();
        for_each_index(&sub_shape, |_, sub| {
            let flat = flat_index(&shape, sub.iter().zip(&ranges).map(|(i, (lo, _))| i + lo));
            values[flat] += weight;
        });
    }
    Grid { edges, values }
}

pub fn decompose_tree(tree: &PartitionTree, max_order: usize) -> TreeDecomposition {
    let leaves = tree.leaves();
    let thresholds = tree.thresholds();
    let mean: f64 = leaves.iter().map(|l| l.volume() * l.value).sum();
    let total_variance: f64 = leaves
        .iter()
        .map(|l| l.volume() * (l.value - mean).powi(2))
        .sum();

    let used: Vec<usize> = (0..tree.dims()).filter(|&d| !thresholds[d].is_empty()).collect();
    let mut grids: HashMap<Vec<usize>, Grid> = HashMap::new();
    let mut components = HashMap::new();
    for k in 1..=max_order.min(used.len()) {
        for subset in combinations(&used, k) {
            let mut grid = marginal_grid(&leaves, &thresholds, &subset);
            let shape = grid.shape();
            for v in &mut grid.values {
                *v -= mean;
            }
            for w in 1..k {
                for positions in combinations(&(0..k).collect::<Vec<_>>(), w) {
                    let lower: Vec<usize> = positions.iter().map(|&p| subset[p]).collect();
                    let Some(sub) = grids.get(&lower) else {
                        continue;
                    };
                    let sub_shape = sub.shape();
                    for_each_index(&shape, |flat, idx| {
                        let j = flat_index(&sub_shape, positions.iter().map(|&p| idx[p]));
                        grid.values[flat] -= sub.values[j];
                    });
                }
            }
            let mut variance = 0.0;
            for_each_index(&shape, |flat, idx| {
                variance += grid.cell_volume(idx) * grid.values[flat].powi(2);
            });
            components.insert(subset.clone(), variance);
            if k < max_order {
                grids.insert(subset, grid);
            }
        }
    }
    TreeDecomposition {
        mean,
        total_variance,
        components,
    }
}

impl PartitionTree {
    /// Integral of the tree over the dimensions not in `dims`, with `dims`
    /// fixed to `values`.
    pub fn marginal(&self, dims: &[usize], values: &[f64]) -> f64 {
        self.leaves()
            .iter()
            .filter(|l| l.contains(dims, values))
            .map(|l| l.value * l.volume_outside(dims))
            .sum()
    }
}

impl RegressionForest {
    /// Mean over trees of [`PartitionTree::marginal`].
    pub fn marginal(&self, dims: &[usize], values: &[f64]) -> f64 {
        let trees = self.trees();
        trees.iter().map(|t| t.marginal(dims, values)).sum::<f64>() / trees.len() as f64
    }
}

/// Fraction of variance explained by every subset of at most `max_order`
/// dimensions, averaged over trees.
pub fn variance_contributions(forest: &RegressionForest, names: &[String], max_order: usize) -> ImportanceReport {
    assert_eq!(names.len(), forest.dims(), "one name per dimension");
    let max_order = max_order.max(1);
    let trees = forest.trees();
    let parts: Vec<TreeDecomposition> = trees.iter().map(|t| decompose_tree(t, max_order)).collect();

    let all: Vec<usize> = (0..forest.dims()).collect();
    let mut entries = Vec::new();
    for k in 1..=max_order.min(all.len()) {
        for dims in combinations(&all, k) {
            let fraction = parts
                .iter()
                .map(|p| {
                    if p.total_variance < ZERO_VARIANCE {
                        0.0
                    } else {
                        p.components.get(&dims).copied().unwrap_or(0.0) / p.total_variance
                    }
                })
                .sum::<f64>()
                / parts.len() as f64;
            entries.push(SubsetImportance {
                subset: dims.iter().map(|&d| names[d].clone()).collect(),
                dims,
                fraction,
            });
        }
    }
    entries.sort_by(|a, b| b.fraction.total_cmp(&a.fraction));
    let total_variance = parts.iter().map(|p| p.total_variance).sum::<f64>() / parts.len() as f64;
    ImportanceReport {
        entries,
        total_variance,
    }
}
