//! Axis-aligned regression trees over the unit cube.

use super::FanovaError;
use crate::seed::{derive, rng_from, Stream};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How many dimensions a node considers when splitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    All,
    /// `ceil(d / 3)`.
    Third,
    Count(usize),
}

impl Features {
    fn resolve(self, d: usize) -> usize {
        match self {
            Features::All => d,
            Features::Third => d.div_ceil(3),
            Features::Count(n) => n.clamp(1, d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Best midpoint between consecutive observed values.
    Best,
    /// One threshold drawn uniformly in the node's observed interval per
    /// candidate dimension; the best of those wins.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub trees: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub split: SplitRule,
    pub features: Features,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self::analysis()
    }
}

impl ForestParams {
    /// The importance-analysis forest.
    pub fn analysis() -> Self {
        Self {
            trees: 30,
            min_leaf: 3,
            bootstrap: true,
            split: SplitRule::Best,
            features: Features::All,
        }
    }

    /// The SMBO surrogate forest.
    pub fn surrogate() -> Self {
        Self {
            trees: 30,
            min_leaf: 3,
            bootstrap: true,
            split: SplitRule::Random,
            features: Features::Third,
        }
    }

    /// One tree that reproduces every training objective at its point.
    pub fn exact() -> Self {
        Self {
            trees: 1,
            min_leaf: 1,
            bootstrap: false,
            split: SplitRule::Best,
            features: Features::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A leaf with its hyper-box `[lower, upper)` in the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBox {
    pub value: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LeafBox {
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Whether the point's coordinates on `dims` fall inside the box.
    pub fn contains(&self, dims: &[usize], values: &[f64]) -> bool {
        dims.iter().zip(values).all(|(&d, &v)| {
            v >= self.lower[d] && (v < self.upper[d] || (v == 1.0 && self.upper[d] == 1.0))
        })
    }

    /// Volume of the projection onto every dimension not in `dims`.
    pub fn volume_outside(&self, dims: &[usize]) -> f64 {
        (0..self.lower.len())
            .filter(|d| !dims.contains(d))
            .map(|d| self.upper[d] - self.lower[d])
            .product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    dims: usize,
    nodes: Vec<Node>,
}

impl PartitionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => i = if x[dim] < threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> Vec<LeafBox> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, vec![0.0; self.dims], vec![1.0; self.dims])];
        while let Some((i, lower, upper)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { value } => out.push(LeafBox {
                    value,
                    lower,
                    upper,
                }),
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    let t = threshold.clamp(lower[dim], upper[dim]);
                    let mut left_upper = upper.clone();
                    left_upper[dim] = t;
                    let mut right_lower = lower.clone();
                    right_lower[dim] = t;
                    stack.push((right, right_lower, upper));
                    stack.push((left, lower, left_upper));
                }
            }
        }
        out
    }

    /// Sorted distinct split thresholds per dimension.
    pub fn thresholds(&self) -> Vec<Vec<f64>> {
        let mut per_dim = vec![Vec::new(); self.dims];
        for n in &self.nodes {
            if let Node::Split { dim, threshold, .. } = *n {
                per_dim[dim].push(threshold);
            }
        }
        for t in &mut per_dim {
            t.sort_by(f64::total_cmp);
            t.dedup();
        }
        per_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    dims: usize,
    trees: Vec<PartitionTree>,
}

impl RegressionForest {
    /// Fits `params.trees` trees; tree `i` uses its own seed derived from one
    /// draw of `rng`, so the result does not depend on thread scheduling.
    pub fn fit<R: Rng + ?Sized>(
        x: &[Vec<f64>],
        y: &[f64],
        params: &ForestParams,
        rng: &mut R,
    ) -> Result<Self, FanovaError> {
        if x.len() != y.len() {
            return Err(FanovaError::ShapeMismatch);
        }
        if x.len() < 2 {
            return Err(FanovaError::TooFewPoints(x.len()));
        }
        let dims = x[0].len();
        if dims == 0 || x.iter().any(|r| r.len() != dims) {
            return Err(FanovaError::ShapeMismatch);
        }
        if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
            return Err(FanovaError::NonFinite);
        }
        if params.trees == 0 || params.min_leaf == 0 {
            return Err(FanovaError::InvalidParams);
        }
        let base = rng.random::<u64>();
        let trees = (0..params.trees)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_from(derive(base, Stream::Forest, i as u64));
                let rows: Vec<usize> = if params.bootstrap {
                    (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                TreeBuilder {
                    x,
                    y,
                    params,
                    dims,
                    nodes: Vec::new(),
                }
                .build(rows, &mut rng)
            })
            .collect();
        Ok(Self { dims, trees })
    }

    pub fn trees(&self) -> &[PartitionTree] {
        &self.trees
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean and standard deviation of the per-tree predictions.
    pub fn predict_with_std(&self, x: &[f64]) -> (f64, f64) {
        let n = self.trees.len() as f64;
        let preds: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        if preds.iter().all(|&p| p == preds[0]) {
            return (preds[0], 0.0);
        }
        let mean = preds.iter().sum::<f64>() / n;
        let var = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
        (mean, var.max(0.0).sqrt())
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ForestParams,
    dims: usize,
    nodes: Vec<Node>,
}

struct Candidate {
    dim: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(mut self, rows: Vec<usize>, rng: &mut R) -> PartitionTree {
        self.grow(rows, rng);
        PartitionTree {
            dims: self.dims,
            nodes: self.nodes,
        }
    }

    fn grow<R: Rng>(&mut self, rows: Vec<usize>, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&r| self.y[r] == first);
        let value = if pure {
            first
        } else {
            rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
        };
        self.nodes.push(Node::Leaf { value });

        if pure || rows.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some(split) = self.choose(&rows, rng) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x[r][split.dim] < split.threshold);
        let left = self.grow(left_rows, rng);
        let right = self.grow(right_rows, rng);
        self.nodes[id] = Node::Split {
            dim: split.dim,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    fn choose<R: Rng>(&self, rows: &[usize], rng: &mut R) -> Option<Candidate> {
        let mut dims: Vec<usize> = (0..self.dims).collect();
        let wanted = self.params.features.resolve(self.dims);
        if wanted < self.dims {
            dims.shuffle(rng);
        }
        let mut best: Option<Candidate> = None;
        for (tried, &dim) in dims.iter().enumerate() {
            // Keep looking past the quota only while nothing splittable was found.
            if tried >= wanted && best.is_some() {
                break;
            }
            let cand = match self.params.split {
                SplitRule::Best => self.best_on(dim, rows),
                SplitRule::Random => self.random_on(dim, rows, rng),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
        best
    }

    /// Score is `sum_l^2 / n_l + sum_r^2 / n_r`, the part of the SSE
    /// reduction that varies with the split.
    fn best_on(&self, dim: usize, rows: &[usize]) -> Option<Candidate> {
        let mut sorted: Vec<(f64, f64)> = rows.iter().map(|&r| (self.x[r][dim], self.y[r])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let total: f64 = sorted.iter().map(|p| p.1).sum();
        let min_leaf = self.params.min_leaf;
        let mut left_sum = 0.0;
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            left_sum += sorted[i].1;
            let nl = i + 1;
            if sorted[i].0 == sorted[i + 1].0 || nl < min_leaf || n - nl < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(Candidate {
                    dim,
                    threshold: 0.5 * (sorted[i].0 + sorted[i + 1].0),
                    score,
                });
            }
        }
        best
    }

    fn random_on<R: Rng>(&self, dim: usize, rows: &[usize], rng: &mut R) -> Option<Candidate> {
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(self.x[r][dim]), hi.max(self.x[r][dim]))
        });
        if lo >= hi {
            return None;
        }
        let threshold = rng.random_range(lo..hi);
        if threshold <= lo {
            return None;
        }
        let (mut nl, mut sl, mut sr) = (0usize, 0.0, 0.0);
        for &r in rows {
            if self.x[r][dim] < threshold {
                nl += 1;
                sl += self.y[r];
            } else {
                sr += self.y[r];
            }
        }
        let nr = rows.len() - nl;
        if nl < self.params.min_leaf || nr < self.params.min_leaf {
            return None;
        }
        Some(Candidate {
            dim,
            threshold,
            score: sl * sl / nl as f64 + sr * sr / nr as f64,
        })
    }
}
