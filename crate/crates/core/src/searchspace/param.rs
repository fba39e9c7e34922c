use super::{SpaceError, Value, ViolationKind};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

impl Scale {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Scale::Linear => x,
            Scale::Log10 => x.log10(),
        }
    }

    pub fn inverse(self, t: f64) -> f64 {
        match self {
            Scale::Linear => t,
            Scale::Log10 => 10f64.powf(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Continuous {
        low: f64,
        high: f64,
        #[serde(default)]
        scale: Scale,
    },
    Integer {
        low: i64,
        high: i64,
        #[serde(default)]
        scale: Scale,
    },
    Categorical { choices: Vec<Value> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub domain: Domain,
    /// Bounds depend on the input resolution; exempt from refinement.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub resolution_coupled: bool,
    /// Native bounds of the space this one was derived from, before any
    /// refinement or fidelity re-bounding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared: Option<[f64; 2]>,
}

impl ParamSpec {
    pub fn continuous(name: impl Into<String>, low: f64, high: f64) -> Self {
        Self::with_domain(
            name,
            Domain::Continuous {
                low,
                high,
                scale: Scale::Linear,
            },
        )
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Self {
        Self::with_domain(
            name,
            Domain::Integer {
                low,
                high,
                scale: Scale::Linear,
            },
        )
    }

    pub fn categorical(name: impl Into<String>, choices: Vec<Value>) -> Self {
        Self::with_domain(name, Domain::Categorical { choices })
    }

    fn with_domain(name: impl Into<String>, domain: Domain) -> Self {
        Self {
            name: name.into(),
            domain,
            resolution_coupled: false,
            declared: None,
        }
    }

    /// Switches a numeric parameter to the log10 scale.
    pub fn log10(mut self) -> Self {
        match &mut self.domain {
            Domain::Continuous { scale, .. } | Domain::Integer { scale, .. } => *scale = Scale::Log10,
            Domain::Categorical { .. } => {}
        }
        self
    }

    pub fn coupled(mut self) -> Self {
        self.resolution_coupled = true;
        self
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.domain, Domain::Categorical { .. })
    }

    pub fn scale(&self) -> Scale {
        match self.domain {
            Domain::Continuous { scale, .. } | Domain::Integer { scale, .. } => scale,
            Domain::Categorical { .. } => Scale::Linear,
        }
    }

    /// Native numeric bounds.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.domain {
            Domain::Continuous { low, high, .. } => Some((low, high)),
            Domain::Integer { low, high, .. } => Some((low as f64, high as f64)),
            Domain::Categorical { .. } => None,
        }
    }

    pub(crate) fn declared_bounds(&self) -> (f64, f64) {
        match self.declared {
            Some([lo, hi]) => (lo, hi),
            None => self.bounds().unwrap_or((0.0, 1.0)),
        }
    }

    /// Bounds on the transformed (linear or log10) scale.
    pub fn transformed_bounds(&self) -> Option<(f64, f64)> {
        let s = self.scale();
        self.bounds().map(|(lo, hi)| (s.forward(lo), s.forward(hi)))
    }

    pub fn choices(&self) -> Option<&[Value]> {
        match &self.domain {
            Domain::Categorical { choices } => Some(choices),
            _ => None,
        }
    }

    pub(crate) fn set_bounds(&mut self, lo: f64, hi: f64) {
        match &mut self.domain {
            Domain::Continuous { low, high, .. } => {
                *low = lo;
                *high = hi;
            }
            Domain::Integer { low, high, .. } => {
                *low = lo.round() as i64;
                *high = hi.round() as i64;
            }
            Domain::Categorical { .. } => {}
        }
    }

    pub(crate) fn check(&self) -> Result<(), SpaceError> {
        let fail = |reason: &str| {
            Err(SpaceError::InvalidParam {
                name: self.name.clone(),
                reason: reason.to_owned(),
            })
        };
        if self.name.is_empty() {
            return fail("empty name");
        }
        match &self.domain {
            Domain::Continuous { low, high, scale } => {
                if !(low.is_finite() && high.is_finite()) {
                    return fail("bounds must be finite");
                }
                if low >= high {
                    return fail("low must be < high");
                }
                if *scale == Scale::Log10 && *low <= 0.0 {
                    return fail("log10 scale requires low > 0");
                }
            }
            Domain::Integer { low, high, scale } => {
                if low >= high {
                    return fail("low must be < high");
                }
                if *scale == Scale::Log10 && *low <= 0 {
                    return fail("log10 scale requires low > 0");
                }
            }
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    return fail("choice list is empty");
                }
                for (i, a) in choices.iter().enumerate() {
                    if choices[..i].iter().any(|b| b.same(a)) {
                        return fail("choices must be unique");
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn check_value(&self, v: &Value) -> Option<ViolationKind> {
        match &self.domain {
            Domain::Continuous { low, high, .. } => match v {
                Value::Float(_) | Value::Int(_) => {
                    let x = v.as_f64().unwrap();
                    (!(x >= *low && x <= *high)).then_some(ViolationKind::OutOfBounds)
                }
                Value::Str(_) => Some(ViolationKind::WrongType),
            },
            Domain::Integer { low, high, .. } => match v {
                Value::Int(i) => (!(i >= low && i <= high)).then_some(ViolationKind::OutOfBounds),
                _ => Some(ViolationKind::WrongType),
            },
            Domain::Categorical { choices } => {
                (!choices.iter().any(|c| c.same(v))).then_some(ViolationKind::NotAChoice)
            }
        }
    }

    pub fn choice_index(&self, v: &Value) -> Option<usize> {
        self.choices()?.iter().position(|c| c.same(v))
    }

    /// Unit coordinate of a value; `None` if the value does not fit the domain.
    pub fn to_unit(&self, v: &Value) -> Option<f64> {
        match &self.domain {
            Domain::Categorical { choices } => {
                let i = self.choice_index(v)?;
                Some((i as f64 + 0.5) / choices.len() as f64)
            }
            _ => {
                let (lo, hi) = self.transformed_bounds()?;
                let t = self.scale().forward(v.as_f64()?);
                Some(((t - lo) / (hi - lo)).clamp(0.0, 1.0))
            }
        }
    }

    /// Value at a unit coordinate (clamped into range).
    pub fn from_unit(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match &self.domain {
            Domain::Continuous { low, high, scale } => {
                let (lo, hi) = (scale.forward(*low), scale.forward(*high));
                Value::Float(scale.inverse(lo + u * (hi - lo)).clamp(*low, *high))
            }
            Domain::Integer { low, high, scale } => {
                let (lo, hi) = (scale.forward(*low as f64), scale.forward(*high as f64));
                let x = scale.inverse(lo + u * (hi - lo)).round() as i64;
                Value::Int(x.clamp(*low, *high))
            }
            Domain::Categorical { choices } => {
                let k = choices.len();
                let i = ((u * k as f64) as usize).min(k - 1);
                choices[i].clone()
            }
        }
    }

    /// Value for a point on the transformed scale.
    pub fn from_transformed(&self, t: f64) -> Value {
        match &self.domain {
            Domain::Continuous { low, high, scale } => {
                Value::Float(scale.inverse(t).clamp(*low, *high))
            }
            Domain::Integer { low, high, scale } => {
                Value::Int((scale.inverse(t).round() as i64).clamp(*low, *high))
            }
            Domain::Categorical { .. } => self.from_unit(t),
        }
    }

    /// Prior draw: uniform on the transformed scale, uniform over choices.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.domain {
            Domain::Integer {
                low,
                high,
                scale: Scale::Linear,
            } => Value::Int(rng.random_range(*low..=*high)),
            Domain::Categorical { choices } => choices[rng.random_range(0..choices.len())].clone(),
            _ => {
                let (lo, hi) = self.transformed_bounds().expect("numeric");
                let t = lo + (hi - lo) * rng.random::<f64>();
                self.from_transformed(t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_json_shape() {
        let p = ParamSpec::integer("n_conv", 1, 4).coupled();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(
            text,
            r#"{"name":"n_conv","type":"integer","low":1,"high":4,"scale":"linear","resolution_coupled":true}"#
        );
        let back: ParamSpec = serde_json::from_str(r#"{"name":"n_conv","type":"integer","low":1,"high":4,"resolution_coupled":true}"#).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn integer_log_unit_mapping() {
        let p = ParamSpec::integer("f", 8, 128).log10();
        assert_eq!(p.to_unit(&Value::Int(8)), Some(0.0));
        assert_eq!(p.to_unit(&Value::Int(128)), Some(1.0));
        assert_eq!(p.from_unit(0.5), Value::Int(32));
    }

    #[test]
    fn categorical_unit_mapping() {
        let p = ParamSpec::categorical("k", vec![3i64.into(), 5i64.into(), 7i64.into()]);
        assert_eq!(p.to_unit(&Value::Int(5)), Some(0.5));
        assert_eq!(p.from_unit(0.99), Value::Int(7));
        assert_eq!(p.from_unit(1.0), Value::Int(7));
        assert_eq!(p.to_unit(&Value::Int(4)), None);
    }
}
