//! Sequential model-based optimization with a random-forest surrogate.
//!
//! After a prior-sampled startup phase, each suggestion fits a forest to the
//! encoded history and picks the candidate with the largest expected
//! improvement over the best objective seen. Candidates are prior samples
//! plus perturbations of the best configurations so far.

use super::{ranked, Observation};
use crate::fanova::{ForestParams, RegressionForest};
use crate::searchspace::{Configuration, SearchSpace};
use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmboConfig {
    pub n_startup: usize,
    pub n_prior_candidates: usize,
    /// Perturbations generated around each of the `n_best` incumbents.
    pub n_local: usize,
    pub n_best: usize,
    /// Standard deviation of local perturbations in unit space.
    pub local_sigma: f64,
    pub forest: ForestParams,
}

impl Default for SmboConfig {
    fn default() -> Self {
        Self {
            n_startup: 20,
            n_prior_candidates: 1000,
            n_local: 10,
            n_best: 5,
            local_sigma: 0.1,
            forest: ForestParams::surrogate(),
        }
    }
}

/// Expected improvement below `best` of a Gaussian with the given mean and
/// standard deviation. With zero spread it is `max(best - mean, 0)`.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    if std <= 0.0 {
        return (best - mean).max(0.0);
    }
    let z = (best - mean) / std;
    let cdf = 0.5 * erfc(-z / SQRT_2);
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    ((best - mean) * cdf + std * pdf).max(0.0)
}

pub(crate) fn suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &[Observation],
    cfg: &SmboConfig,
    rng: &mut R,
) -> Configuration {
    if history.len() < cfg.n_startup.max(2) {
        return space.sample(rng);
    }
    let x: Vec<Vec<f64>> = history.iter().map(|o| space.encode_unchecked(&o.config)).collect();
    let y: Vec<f64> = history.iter().map(|o| o.objective).collect();
    let forest = match RegressionForest::fit(&x, &y, &cfg.forest, rng) {
        Ok(f) => f,
        Err(_) => return space.sample(rng),
    };
    let best = y.iter().copied().fold(f64::INFINITY, f64::min);

    let mut candidates: Vec<Configuration> = (0..cfg.n_prior_candidates).map(|_| space.sample(rng)).collect();
    for incumbent in ranked(history).into_iter().take(cfg.n_best) {
        for _ in 0..cfg.n_local {
            candidates.push(space.neighbor(&incumbent.config, cfg.local_sigma, rng));
        }
    }

    let mut choice = (f64::NEG_INFINITY, 0);
    for (i, c) in candidates.iter().enumerate() {
        let (mean, std) = forest.predict_with_std(&space.encode_unchecked(c));
        let ei = expected_improvement(mean, std, best);
        if ei > choice.0 {
            choice = (ei, i);
        }
    }
    candidates.swap_remove(choice.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::defaults::quadratic_space;
    use crate::seed::rng_from;

    #[test]
    fn ei_reference_values() {
        // z = 1: 1 * 0.8413447460685429 + 1 * 0.24197072451914337
        assert!((expected_improvement(0.0, 1.0, 1.0) - 1.0833154705876864).abs() < 1e-12);
        // z = 0: sigma * phi(0)
        assert!((expected_improvement(2.0, 0.5, 2.0) - 0.5 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(expected_improvement(0.3, 0.0, 0.5), 0.2);
        assert_eq!(expected_improvement(0.7, 0.0, 0.5), 0.0);
    }

    #[test]
    fn ei_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let ei = expected_improvement(i as f64 * 0.1, 0.4, 1.0);
            assert!(ei < prev);
            prev = ei;
        }
        let mut prev = 0.0;
        for i in 1..50 {
            let ei = expected_improvement(1.0, i as f64 * 0.1, 1.0);
            assert!(ei > prev);
            prev = ei;
        }
    }

    #[test]
    fn steers_toward_low_region() {
        let space = quadratic_space();
        let mut rng = rng_from(4);
        let f = |c: &Configuration| (c.f64("x1").unwrap() - 0.2).powi(2) + (c.f64("x2").unwrap() - 0.2).powi(2);
        let history: Vec<Observation> = (0..40)
            .map(|i| {
                let config = space.sample(&mut rng);
                Observation {
                    id: i + 1,
                    objective: f(&config),
                    config,
                }
            })
            .collect();
        let mut close = 0;
        for _ in 0..10 {
            let c = suggest(&space, &history, &SmboConfig::default(), &mut rng);
            if f(&c) < 0.05 {
                close += 1;
            }
        }
        assert!(close >= 8, "{close}");
    }
}
