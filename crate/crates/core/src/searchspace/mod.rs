//! Conditional hyperparameter search spaces.
//!
//! A [`SearchSpace`] is an ordered list of [`ParamSpec`]s plus at most one
//! activation [`Condition`] per parameter. Parameters are always visited in a
//! stored topological order so a parent's value is known before its children
//! are drawn, validated or decoded.
//!
//! Numeric parameters live on a transformed scale (linear or log10) that is
//! mapped affinely onto `[0, 1]` by [`SearchSpace::encode`]. Categorical value
//! `i` of `k` encodes to `(i + 0.5) / k`. Inactive parameters encode to
//! [`INACTIVE`], so every configuration has the same encoded length.

pub mod defaults;
mod param;
mod refine;

pub use param::{Domain, ParamSpec, Scale};
pub use refine::select_elites;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Coordinate used for parameters that are inactive in a configuration.
pub const INACTIVE: f64 = 1.0;

/// A hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(x) => Some(x),
            Value::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Value::Int(i) => Some(i),
            _ => None,
        }
    }

    /// Equality that treats `Int(2)` and `Float(2.0)` as the same value.
    pub fn same(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Str(_), _) | (_, Value::Str(_)) => false,
            (a, b) => a.as_f64() == b.as_f64(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_owned())
    }
}

/// One assignment of values to the ACTIVE parameters of a space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, Value>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        self.0.insert(name.into(), value.into())
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn f64(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    pub fn i64(&self, name: &str) -> Option<i64> {
        self.get(name).and_then(Value::as_i64)
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for Configuration {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// Activation predicate over a parent's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Parent value is one of the listed values.
    In(Vec<Value>),
    /// Parent value is numeric and `>=` the threshold.
    AtLeast(f64),
}

impl Predicate {
    pub fn holds(&self, value: &Value) -> bool {
        match self {
            Predicate::In(values) => values.iter().any(|v| v.same(value)),
            Predicate::AtLeast(t) => value.as_f64().is_some_and(|x| x >= *t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub child: String,
    pub parent: String,
    pub active_when: Predicate,
}

impl Condition {
    pub fn new(child: impl Into<String>, parent: impl Into<String>, active_when: Predicate) -> Self {
        Self {
            child: child.into(),
            parent: parent.into(),
            active_when,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    OutOfBounds,
    NotAChoice,
    WrongType,
    InactivePresent,
    ActiveMissing,
    UnknownParameter,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::OutOfBounds => "out of bounds",
            ViolationKind::NotAChoice => "not one of the choices",
            ViolationKind::WrongType => "wrong value type",
            ViolationKind::InactivePresent => "inactive parameter present",
            ViolationKind::ActiveMissing => "active parameter missing",
            ViolationKind::UnknownParameter => "unknown parameter",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub param: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.param, self.kind)
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("condition references unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` has more than one condition")]
    MultipleConditions(String),
    #[error("condition graph has a cycle through `{0}`")]
    Cycle(String),
    #[error("invalid configuration: {}", join_violations(.0))]
    InvalidConfiguration(Vec<Violation>),
    #[error("insufficient elites: quantile {q} of {trials} usable trials selects none")]
    InsufficientElites { trials: usize, q: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resolution {0} is too small for any pooling layer bound (need >= 2)")]
    ResolutionTooSmall(u32),
    #[error("parameter `{name}` has no valid range at fidelity {fidelity}")]
    FidelityTooLow { name: String, fidelity: u32 },
}

/// The largest number of conv+pool blocks whose output keeps at least 2 pixels
/// per side, each pooling halving both spatial sides.
pub fn max_conv_layers(resolution: u32) -> Result<u32, SpaceError> {
    if resolution < 2 {
        return Err(SpaceError::ResolutionTooSmall(resolution));
    }
    Ok((resolution / 2).ilog2())
}

#[derive(Serialize, Deserialize)]
struct SpaceDef {
    params: Vec<ParamSpec>,
    #[serde(default)]
    conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDef", into = "SpaceDef")]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
    conditions: Vec<Condition>,
    order: Vec<usize>,
    gate: Vec<Option<(usize, Predicate)>>,
    index: BTreeMap<String, usize>,
}

impl TryFrom<SpaceDef> for SearchSpace {
    type Error = SpaceError;

    fn try_from(def: SpaceDef) -> Result<Self, Self::Error> {
        SearchSpace::new(def.params, def.conditions)
    }
}

impl From<SearchSpace> for SpaceDef {
    fn from(space: SearchSpace) -> Self {
        SpaceDef {
            params: space.params,
            conditions: space.conditions,
        }
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>, conditions: Vec<Condition>) -> Result<Self, SpaceError> {
        let mut index = BTreeMap::new();
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if index.insert(p.name.clone(), i).is_some() {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }

        let mut gate: Vec<Option<(usize, Predicate)>> = vec![None; params.len()];
        for c in &conditions {
            let child = *index
                .get(&c.child)
                .ok_or_else(|| SpaceError::UnknownParameter(c.child.clone()))?;
            let parent = *index
                .get(&c.parent)
                .ok_or_else(|| SpaceError::UnknownParameter(c.parent.clone()))?;
            if child == parent {
                return Err(SpaceError::Cycle(c.child.clone()));
            }
            if gate[child].is_some() {
                return Err(SpaceError::MultipleConditions(c.child.clone()));
            }
            gate[child] = Some((parent, c.active_when.clone()));
        }

        // Each node has at most one parent, so the graph is a forest unless
        // following parents from some node revisits it.
        for start in 0..params.len() {
            let mut cur = start;
            let mut steps = 0;
            while let Some((p, _)) = &gate[cur] {
                cur = *p;
                steps += 1;
                if steps > params.len() {
                    return Err(SpaceError::Cycle(params[start].name.clone()));
                }
            }
        }

        // Kahn's algorithm, always taking the lowest declared index first.
        let mut placed = vec![false; params.len()];
        let mut order = Vec::with_capacity(params.len());
        while order.len() < params.len() {
            let next = (0..params.len())
                .find(|&i| !placed[i] && gate[i].as_ref().is_none_or(|(p, _)| placed[*p]))
                .expect("acyclic graph always has a ready node");
            placed[next] = true;
            order.push(next);
        }

        Ok(Self {
            params,
            conditions,
            order,
            gate,
            index,
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn dimensionality(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    /// Parameter indices in topological order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub(crate) fn params_mut(&mut self) -> &mut [ParamSpec] {
        &mut self.params
    }

    /// Whether parameter `i` is active given already-resolved ancestor values.
    ///
    /// Only valid while building a configuration in topological order, where
    /// absent parents are exactly the inactive ones.
    pub fn is_active(&self, i: usize, partial: &Configuration) -> bool {
        match &self.gate[i] {
            None => true,
            Some((p, pred)) => partial
                .get(&self.params[*p].name)
                .is_some_and(|v| pred.holds(v)),
        }
    }

    /// Draws a configuration from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut config = Configuration::new();
        for &i in &self.order {
            if self.is_active(i, &config) {
                let p = &self.params[i];
                config.insert(p.name.clone(), p.draw(rng));
            }
        }
        config
    }

    pub fn validate(&self, config: &Configuration) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for (name, _) in config.iter() {
            if !self.index.contains_key(name) {
                violations.push(Violation {
                    param: name.to_owned(),
                    kind: ViolationKind::UnknownParameter,
                });
            }
        }
        let mut active = vec![false; self.params.len()];
        for &i in &self.order {
            let p = &self.params[i];
            active[i] = match &self.gate[i] {
                None => true,
                Some((parent, pred)) => {
                    active[*parent]
                        && config
                            .get(&self.params[*parent].name)
                            .is_some_and(|v| pred.holds(v))
                }
            };
            match (active[i], config.get(&p.name)) {
                (true, Some(v)) => {
                    if let Some(kind) = p.check_value(v) {
                        violations.push(Violation {
                            param: p.name.clone(),
                            kind,
                        });
                    }
                }
                (true, None) => violations.push(Violation {
                    param: p.name.clone(),
                    kind: ViolationKind::ActiveMissing,
                }),
                (false, Some(_)) => violations.push(Violation {
                    param: p.name.clone(),
                    kind: ViolationKind::InactivePresent,
                }),
                (false, None) => {}
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn is_valid(&self, config: &Configuration) -> bool {
        self.validate(config).is_ok()
    }

    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>, SpaceError> {
        self.validate(config)
            .map_err(SpaceError::InvalidConfiguration)?;
        Ok(self.encode_unchecked(config))
    }

    /// Encodes without validating; values must already be in range.
    pub(crate) fn encode_unchecked(&self, config: &Configuration) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| {
                config
                    .get(&p.name)
                    .and_then(|v| p.to_unit(v))
                    .unwrap_or(INACTIVE)
            })
            .collect()
    }

    /// Maps a unit vector back to a configuration, resolving activity in
    /// topological order. Coordinates of inactive parameters are ignored.
    pub fn decode(&self, unit: &[f64]) -> Configuration {
        assert_eq!(unit.len(), self.params.len(), "unit vector length");
        let mut config = Configuration::new();
        for &i in &self.order {
            if self.is_active(i, &config) {
                let p = &self.params[i];
                config.insert(p.name.clone(), p.from_unit(unit[i]));
            }
        }
        config
    }

    /// A random neighbour of `base`: numeric coordinates receive Gaussian
    /// noise of standard deviation `sigma` in unit space, categoricals are
    /// resampled with probability `sigma`, and parameters that become active
    /// are drawn from the prior.
    pub fn neighbor<R: Rng + ?Sized>(
        &self,
        base: &Configuration,
        sigma: f64,
        rng: &mut R,
    ) -> Configuration {
        let mut config = Configuration::new();
        for &i in &self.order {
            if !self.is_active(i, &config) {
                continue;
            }
            let p = &self.params[i];
            let value = match base.get(&p.name).and_then(|v| p.to_unit(v)) {
                Some(u) => match p.domain {
                    Domain::Categorical { .. } => {
                        if rng.random::<f64>() < sigma {
                            p.draw(rng)
                        } else {
                            p.from_unit(u)
                        }
                    }
                    _ => {
                        let z: f64 = rng.sample(StandardNormal);
                        p.from_unit((u + sigma * z).clamp(0.0, 1.0))
                    }
                },
                None => p.draw(rng),
            };
            config.insert(p.name.clone(), value);
        }
        config
    }

    /// Re-bounds resolution-coupled integer parameters for a fidelity: the
    /// upper bound becomes `min(declared upper bound, max_conv_layers(fidelity))`.
    pub fn at_fidelity(&self, fidelity: u32) -> Result<SearchSpace, SpaceError> {
        let mut space = self.clone();
        let cap = max_conv_layers(fidelity)?;
        for p in space.params_mut() {
            if !p.resolution_coupled {
                continue;
            }
            let declared = p.declared_bounds();
            if let Domain::Integer { low, high, .. } = &mut p.domain {
                let new_high = (declared.1 as i64).min(cap as i64);
                if new_high <= *low {
                    return Err(SpaceError::FidelityTooLow {
                        name: p.name.clone(),
                        fidelity,
                    });
                }
                p.declared = Some([declared.0, declared.1]);
                *high = new_high;
            }
        }
        Ok(space)
    }

    /// Returns a copy with a parameter's native bounds replaced (numeric only).
    pub fn with_bounds(&self, name: &str, low: f64, high: f64) -> Result<SearchSpace, SpaceError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| SpaceError::UnknownParameter(name.to_owned()))?;
        let mut params = self.params.clone();
        params[i].set_bounds(low, high);
        SearchSpace::new(params, self.conditions.clone())
    }
}
