//! Built-in search spaces.

use super::{max_conv_layers, Condition, ParamSpec, Predicate, SearchSpace, SpaceError, Value};

pub const LEARNING_RATE: &str = "learning_rate";
pub const N_CONV: &str = "n_conv";
pub const N_FC: &str = "n_fc";
pub const BATCH_SIZE: &str = "batch_size";
pub const L1: &str = "l1";
pub const L2: &str = "l2";
pub const MAX_FC_LAYERS: u32 = 3;

pub fn filters(layer: u32) -> String {
    format!("filters_{layer}")
}

pub fn kernel(layer: u32) -> String {
    format!("kernel_{layer}")
}

pub fn units(layer: u32) -> String {
    format!("units_{layer}")
}

/// The CNN hyperparameter space for inputs up to `max_resolution` pixels per
/// side.
///
/// Per-layer parameters are declared for every conv layer the largest input
/// admits and activate with `n_conv >= k` (or `n_fc >= k`). Call
/// [`SearchSpace::at_fidelity`] to bound `n_conv` for a smaller input.
pub fn cnn_space(max_resolution: u32) -> Result<SearchSpace, SpaceError> {
    let max_conv = max_conv_layers(max_resolution)?;
    if max_conv < 2 {
        return Err(SpaceError::FidelityTooLow {
            name: N_CONV.to_owned(),
            fidelity: max_resolution,
        });
    }
    let mut params = vec![
        ParamSpec::continuous(LEARNING_RATE, 1e-5, 1.0).log10(),
        ParamSpec::integer(N_CONV, 1, max_conv as i64).coupled(),
    ];
    let mut conditions = Vec::new();
    for k in 1..=max_conv {
        params.push(ParamSpec::integer(filters(k), 8, 128).log10());
        params.push(ParamSpec::categorical(
            kernel(k),
            vec![Value::Int(3), Value::Int(5), Value::Int(7)],
        ));
        conditions.push(Condition::new(filters(k), N_CONV, Predicate::AtLeast(k as f64)));
        conditions.push(Condition::new(kernel(k), N_CONV, Predicate::AtLeast(k as f64)));
    }
    params.push(ParamSpec::integer(N_FC, 1, MAX_FC_LAYERS as i64));
    for k in 1..=MAX_FC_LAYERS {
        params.push(ParamSpec::integer(units(k), 16, 512).log10());
        conditions.push(Condition::new(units(k), N_FC, Predicate::AtLeast(k as f64)));
    }
    params.push(ParamSpec::categorical(
        BATCH_SIZE,
        [16, 32, 64, 128, 256].into_iter().map(Value::Int).collect(),
    ));
    params.push(ParamSpec::continuous(L1, 1e-7, 1e-2).log10());
    params.push(ParamSpec::continuous(L2, 1e-7, 1e-2).log10());
    SearchSpace::new(params, conditions)
}

/// Two continuous parameters `x1`, `x2` in `[0, 1]`.
pub fn quadratic_space() -> SearchSpace {
    SearchSpace::new(
        vec![
            ParamSpec::continuous("x1", 0.0, 1.0),
            ParamSpec::continuous("x2", 0.0, 1.0),
        ],
        vec![],
    )
    .expect("static space is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cnn_space_shape() {
        let s = cnn_space(128).unwrap();
        // lr, n_conv, 6 x (filters, kernel), n_fc, 3 x units, batch, l1, l2
        assert_eq!(s.dimensionality(), 2 + 12 + 1 + 3 + 3);
        assert_eq!(s.param(N_CONV).unwrap().bounds(), Some((1.0, 6.0)));
        assert!(cnn_space(4).is_err());
    }
}
