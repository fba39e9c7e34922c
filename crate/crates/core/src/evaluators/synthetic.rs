use super::{EvalError, Evaluator};
use crate::searchspace::defaults::{cnn_space, filters, LEARNING_RATE, L2, N_CONV, N_FC};
use crate::searchspace::{max_conv_layers, Configuration, SearchSpace};
use crate::seed::rng_from;
use crate::trial::{TrialRequest, TrialResult};
use rand_distr::{Distribution, Normal};

pub(super) const MIMIC_NOISE_SD: f64 = 0.01;
pub(super) const QUADRATIC_NOISE_SD: f64 = 0.005;

/// Zero-mean Gaussian draw determined by `seed` alone.
pub fn gaussian_noise(seed: u64, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("sd is finite and positive").sample(&mut rng_from(seed))
}

/// Synthetic stand-in for CNN validation error on the default CNN space.
///
/// ```text
/// objective = 0.20 + 0.50 (u_lr - 0.7)^2 + 0.15 |n_conv - opt_conv| / L
///           + 0.10 ((n_fc - 1) / 2)^2 + 0.05 mean_k (u_filters_k - 0.6)^2
///           + 0.04 (u_l2 - 0.5)^2 + 0.30 * 32 / fidelity + noise
/// cost      = (fidelity / 32)^2 (1 + 0.1 n_conv + 0.05 n_fc)
/// ```
///
/// `u_*` are unit encodings under the default bounds, `L` is the maximum conv
/// depth at the fidelity and `opt_conv = log2(fidelity) - 3`.
#[derive(Debug, Clone)]
pub struct CnnMimic {
    noise_sd: f64,
}

impl Default for CnnMimic {
    fn default() -> Self {
        Self::new()
    }
}

impl CnnMimic {
    pub fn new() -> Self {
        Self::with_noise(MIMIC_NOISE_SD)
    }

    pub fn with_noise(noise_sd: f64) -> Self {
        Self { noise_sd }
    }

    /// Noise-free objective, or `None` if the configuration is invalid at
    /// this fidelity.
    pub fn mean_objective(&self, config: &Configuration, fidelity: u32) -> Option<f64> {
        let space = cnn_space(fidelity).ok()?;
        if !space.is_valid(config) {
            return None;
        }
        let unit = |name: &str| space.param(name)?.to_unit(config.get(name)?);
        let l = max_conv_layers(fidelity).ok()? as f64;
        let opt_conv = (fidelity as f64).log2() - 3.0;
        let n_conv = config.i64(N_CONV)?;
        let n_fc = config.i64(N_FC)? as f64;
        let filter_term = (1..=n_conv as u32)
            .map(|k| unit(&filters(k)).map(|u| (u - 0.6).powi(2)))
            .sum::<Option<f64>>()?
            / n_conv as f64;
        Some(
            0.20 + 0.50 * (unit(LEARNING_RATE)? - 0.7).powi(2)
                + 0.15 * (n_conv as f64 - opt_conv).abs() / l
                + 0.10 * ((n_fc - 1.0) / 2.0).powi(2)
                + 0.05 * filter_term
                + 0.04 * (unit(L2)? - 0.5).powi(2)
                + 0.30 * 32.0 / fidelity as f64,
        )
    }

    pub fn cost(config: &Configuration, fidelity: u32) -> f64 {
        let n_conv = config.f64(N_CONV).unwrap_or(0.0);
        let n_fc = config.f64(N_FC).unwrap_or(0.0);
        (fidelity as f64 / 32.0).powi(2) * (1.0 + 0.1 * n_conv + 0.05 * n_fc)
    }
}

impl Evaluator for CnnMimic {
    fn name(&self) -> &str {
        "cnn_mimic"
    }

    fn evaluate(&self, request: &TrialRequest) -> Result<TrialResult, EvalError> {
        Ok(match self.mean_objective(&request.config, request.fidelity) {
            Some(mean) => TrialResult::ok(
                request.trial_id,
                (mean + gaussian_noise(request.seed, self.noise_sd)).max(0.0),
                Self::cost(&request.config, request.fidelity),
            ),
            None => TrialResult::failed(
                request.trial_id,
                0.0,
                format!("configuration is not valid at fidelity {}", request.fidelity),
            ),
        })
    }

    fn supports(&self, fidelity: u32) -> bool {
        cnn_space(fidelity).is_ok()
    }
}

/// Two-dimensional quadratic with a fidelity-dependent bias:
/// `sum (x_i - 0.3)^2 + 0.5 (1 - f / f_max) |x1 - x2| + noise`, cost
/// `(f / f_max)^2`.
#[derive(Debug, Clone)]
pub struct QuadraticMf {
    fid_max: u32,
    noise_sd: f64,
}

impl QuadraticMf {
    pub fn new(fid_max: u32) -> Self {
        Self::with_noise(fid_max, QUADRATIC_NOISE_SD)
    }

    pub fn with_noise(fid_max: u32, noise_sd: f64) -> Self {
        Self { fid_max, noise_sd }
    }

    pub fn mean_objective(&self, config: &Configuration, fidelity: u32) -> Option<f64> {
        if config.len() != 2 {
            return None;
        }
        let x1 = config.f64("x1")?;
        let x2 = config.f64("x2")?;
        let ratio = fidelity as f64 / self.fid_max as f64;
        Some((x1 - 0.3).powi(2) + (x2 - 0.3).powi(2) + 0.5 * (1.0 - ratio) * (x1 - x2).abs())
    }

    pub fn space(&self) -> SearchSpace {
        crate::searchspace::defaults::quadratic_space()
    }
}

impl Evaluator for QuadraticMf {
    fn name(&self) -> &str {
        "quadratic_mf"
    }

    fn evaluate(&self, request: &TrialRequest) -> Result<TrialResult, EvalError> {
        if !self.supports(request.fidelity) {
            return Err(EvalError::UnsupportedFidelity(request.fidelity));
        }
        let cost = (request.fidelity as f64 / self.fid_max as f64).powi(2);
        Ok(match self.mean_objective(&request.config, request.fidelity) {
            Some(mean) => TrialResult::ok(
                request.trial_id,
                mean + gaussian_noise(request.seed, self.noise_sd),
                cost,
            ),
            None => TrialResult::failed(request.trial_id, 0.0, "expected exactly x1 and x2"),
        })
    }

    fn supports(&self, fidelity: u32) -> bool {
        fidelity >= 1 && fidelity <= self.fid_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::searchspace::defaults::{kernel, units, BATCH_SIZE, L1};
    use crate::searchspace::Value;
    use crate::trial::Status;

    /// lr at u = 0.7, n_conv at the optimum, n_fc = 1, filters at u = 0.6,
    /// l2 at u = 0.5.
    fn ideal(fidelity: u32) -> Configuration {
        let n_conv = (fidelity as f64).log2() as i64 - 3;
        let mut c = Configuration::new();
        c.insert(LEARNING_RATE, 10f64.powf(-1.5));
        c.insert(N_CONV, n_conv);
        // 10^(log10(8) + 0.6 log10(16)) = 8 * 16^0.6 is not an integer, so
        // filters are checked through the encoded value below
        for k in 1..=n_conv as u32 {
            c.insert(filters(k), 42i64);
            c.insert(kernel(k), 3i64);
        }
        c.insert(N_FC, 1i64);
        c.insert(units(1), 64i64);
        c.insert(BATCH_SIZE, 32i64);
        c.insert(L1, 1e-5);
        c.insert(L2, 10f64.powf(-4.5));
        c
    }

    fn request(config: Configuration, fidelity: u32, seed: u64) -> TrialRequest {
        TrialRequest {
            trial_id: 1,
            fidelity,
            seed,
            config,
        }
    }

    #[test]
    fn ideal_config_at_128() {
        let c = ideal(128);
        let space = cnn_space(128).unwrap();
        let uf = space.param(&filters(1)).unwrap().to_unit(&Value::Int(42)).unwrap();
        let filter_excess = 0.05 * (uf - 0.6).powi(2);
        let r = CnnMimic::new().evaluate(&request(c, 128, 11)).unwrap();
        let expected = 0.275 + filter_excess + gaussian_noise(11, 0.01);
        assert!((r.objective - expected).abs() < 1e-12, "{} vs {expected}", r.objective);
    }

    #[test]
    fn gap_difference_between_fidelities() {
        // n_conv = 2 is optimal at 32 and n_conv = 4 at 128; with depth at
        // its optimum in both, the objectives differ by the gap alone
        let lo = CnnMimic::with_noise(0.0).mean_objective(&ideal(32), 32).unwrap();
        let hi = CnnMimic::with_noise(0.0).mean_objective(&ideal(128), 128).unwrap();
        assert!((lo - hi - 0.225).abs() < 1e-12);
    }

    #[test]
    fn cost_examples() {
        let mut c = ideal(32);
        c.insert(N_CONV, 1i64);
        assert!((CnnMimic::cost(&c, 32) - 1.15).abs() < 1e-12);
        assert!((CnnMimic::cost(&c, 64) / CnnMimic::cost(&c, 32) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_fails() {
        let mut c = ideal(128);
        c.insert(LEARNING_RATE, 5.0);
        let r = CnnMimic::new().evaluate(&request(c, 128, 0)).unwrap();
        assert_eq!(r.status, Status::Failed);
        // four conv layers do not fit a 16-pixel input
        let r = CnnMimic::new().evaluate(&request(ideal(128), 16, 0)).unwrap();
        assert_eq!(r.status, Status::Failed);
    }

    #[test]
    fn deterministic() {
        let e = CnnMimic::new();
        let a = e.evaluate(&request(ideal(64), 64, 5)).unwrap();
        let b = e.evaluate(&request(ideal(64), 64, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quadratic_examples() {
        let q = QuadraticMf::with_noise(64, 0.0);
        let at = |x1: f64, x2: f64, f: u32| {
            let c: Configuration = [("x1", x1), ("x2", x2)].into_iter().collect();
            q.evaluate(&request(c, f, 0)).unwrap().objective
        };
        assert_eq!(at(0.3, 0.3, 64), 0.0);
        assert_eq!(at(0.3, 0.3, 32), 0.0);
        assert!((at(0.8, 0.3, 64) - 0.25).abs() < 1e-15);
        assert!((at(0.8, 0.3, 32) - 0.375).abs() < 1e-15);
        let one: Configuration = [("x1", 0.3)].into_iter().collect();
        assert_eq!(q.evaluate(&request(one, 64, 0)).unwrap().status, Status::Failed);
        assert!(q.evaluate(&request(Configuration::new(), 65, 0)).is_err());
    }
}
