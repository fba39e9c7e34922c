//! Tree-structured Parzen estimator.
//!
//! History is split into a good and a bad set by objective quantile. Each
//! parameter is then suggested on its own, in topological order, from the
//! values it took in configurations where it was active: candidates are drawn
//! from the good density `l` and the one maximizing `l(x) / g(x)` wins.

use super::{ranked, Observation};
use crate::searchspace::{Configuration, Domain, SearchSpace};
use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TpeConfig {
    pub gamma: f64,
    pub n_startup: usize,
    pub n_candidates: usize,
    /// Lower bound on a kernel's bandwidth, as a fraction of the range.
    pub min_bandwidth: f64,
    /// Pseudo-count added to every categorical choice.
    pub smoothing: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            gamma: 0.15,
            n_startup: 20,
            n_candidates: 24,
            min_bandwidth: 0.01,
            smoothing: 1.0,
        }
    }
}

/// Good set: the `ceil(gamma * n)` best entries; bad set: everything else.
pub fn tpe_split(history: &[Observation], gamma: f64) -> (Vec<&Observation>, Vec<&Observation>) {
    let sorted = ranked(history);
    let n_good = ((gamma * sorted.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let n_good = n_good.min(sorted.len());
    let mut good = sorted;
    let bad = good.split_off(n_good);
    (good, bad)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Mixture of truncated Gaussians on `[low, high]` plus one uniform prior
/// component, all equally weighted.
#[derive(Debug, Clone)]
pub struct ParzenEstimator {
    low: f64,
    high: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    masses: Vec<f64>,
}

impl ParzenEstimator {
    /// Bandwidth of each kernel is the distance to its nearest neighbour,
    /// floored at `min_bandwidth * (high - low)`. A lone point gets the
    /// whole range.
    pub fn new(points: &[f64], low: f64, high: f64, min_bandwidth: f64) -> Self {
        let range = high - low;
        let mut sorted: Vec<f64> = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        let floor = min_bandwidth * range;
        let sigmas: Vec<f64> = (0..sorted.len())
            .map(|i| {
                if sorted.len() == 1 {
                    return range;
                }
                let prev = if i > 0 { sorted[i] - sorted[i - 1] } else { f64::INFINITY };
                let next = if i + 1 < sorted.len() { sorted[i + 1] - sorted[i] } else { f64::INFINITY };
                prev.min(next).max(floor)
            })
            .collect();
        let masses = sorted
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| std_normal_cdf((high - mu) / s) - std_normal_cdf((low - mu) / s))
            .collect();
        Self {
            low,
            high,
            mus: sorted,
            sigmas,
            masses,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let k = self.mus.len() as f64;
        let prior = 1.0 / (self.high - self.low);
        let kernels: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.masses)
            .map(|((&mu, &s), &m)| {
                let z = (x - mu) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * PI).sqrt() * m)
            })
            .sum();
        (kernels + prior) / (k + 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let j = rng.random_range(0..=self.mus.len());
        if j == self.mus.len() {
            return self.low + (self.high - self.low) * rng.random::<f64>();
        }
        let (mu, s) = (self.mus[j], self.sigmas[j]);
        let a = std_normal_cdf((self.low - mu) / s);
        let b = std_normal_cdf((self.high - mu) / s);
        let u = a + (b - a) * rng.random::<f64>();
        let p = u.clamp(1e-300, 1.0 - 1e-16);
        (mu + s * std_normal_quantile(p)).clamp(self.low, self.high)
    }
}

/// The candidate with the highest `l(x) / g(x)`; the first one on ties.
pub fn select_candidate(good: &ParzenEstimator, bad: &ParzenEstimator, candidates: &[f64]) -> f64 {
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &c in candidates {
        let score = good.pdf(c).ln() - bad.pdf(c).ln();
        if score > best.0 {
            best = (score, c);
        }
    }
    best.1
}

/// Suggests a value on the transformed interval `[low, high]`.
pub fn suggest_numeric<R: Rng + ?Sized>(
    good: &[f64],
    bad: &[f64],
    low: f64,
    high: f64,
    cfg: &TpeConfig,
    rng: &mut R,
) -> f64 {
    let l = ParzenEstimator::new(good, low, high, cfg.min_bandwidth);
    let g = ParzenEstimator::new(bad, low, high, cfg.min_bandwidth);
    let candidates: Vec<f64> = (0..cfg.n_candidates).map(|_| l.sample(rng)).collect();
    select_candidate(&l, &g, &candidates)
}

/// Suggests a choice index from smoothed good/bad counts.
pub fn suggest_categorical<R: Rng + ?Sized>(
    good_counts: &[f64],
    bad_counts: &[f64],
    cfg: &TpeConfig,
    rng: &mut R,
) -> usize {
    let k = good_counts.len();
    let smooth = |counts: &[f64]| -> Vec<f64> {
        let total: f64 = counts.iter().sum::<f64>() + cfg.smoothing * k as f64;
        counts.iter().map(|c| (c + cfg.smoothing) / total).collect()
    };
    let l = smooth(good_counts);
    let g = smooth(bad_counts);
    let mut best = (f64::NEG_INFINITY, 0);
    for _ in 0..cfg.n_candidates {
        let mut u = rng.random::<f64>();
        let mut idx = k - 1;
        for (i, p) in l.iter().enumerate() {
            if u < *p {
                idx = i;
                break;
            }
            u -= p;
        }
        let score = l[idx] / g[idx];
        if score > best.0 {
            best = (score, idx);
        }
    }
    best.1
}

pub(crate) fn suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &[Observation],
    cfg: &TpeConfig,
    rng: &mut R,
) -> Configuration {
    if history.len() < cfg.n_startup.max(1) {
        return space.sample(rng);
    }
    let (good, bad) = tpe_split(history, cfg.gamma);
    let mut config = Configuration::new();
    for &i in space.order() {
        if !space.is_active(i, &config) {
            continue;
        }
        let p = &space.params()[i];
        let value = match &p.domain {
            Domain::Categorical { choices } => {
                let counts = |set: &[&Observation]| {
                    let mut c = vec![0.0; choices.len()];
                    for o in set {
                        if let Some(j) = o.config.get(&p.name).and_then(|v| p.choice_index(v)) {
                            c[j] += 1.0;
                        }
                    }
                    c
                };
                let j = suggest_categorical(&counts(&good), &counts(&bad), cfg, rng);
                choices[j].clone()
            }
            _ => {
                let scale = p.scale();
                let values = |set: &[&Observation]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|o| o.config.f64(&p.name))
                        .map(|x| scale.forward(x))
                        .collect()
                };
                let (low, high) = p.transformed_bounds().expect("numeric");
                let t = suggest_numeric(&values(&good), &values(&bad), low, high, cfg, rng);
                p.from_transformed(t)
            }
        };
        config.insert(p.name.clone(), value);
    }
    config
}
