//! Shrinking a space to the value ranges of its best trials.

use super::{Domain, ParamSpec, SearchSpace, SpaceError, Value};
use crate::trial::Trial;

/// Minimum refined width, as a fraction of the declared transformed range.
const FLOOR_FRACTION: f64 = 0.05;

/// The best `floor(q * n)` usable trials, by objective then trial id.
///
/// Failed trials never count as elites.
pub fn select_elites(trials: &[Trial], q: f64) -> Result<Vec<&Trial>, SpaceError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(SpaceError::InvalidArgument(format!("quantile {q} not in (0, 1]")));
    }
    let mut usable: Vec<&Trial> = trials.iter().filter(|t| t.is_ok()).collect();
    usable.sort_by(|a, b| {
        a.objective
            .unwrap()
            .total_cmp(&b.objective.unwrap())
            .then(a.id.cmp(&b.id))
    });
    let count = (q * usable.len() as f64 + 1e-9).floor() as usize;
    if count == 0 {
        return Err(SpaceError::InsufficientElites {
            trials: usable.len(),
            q,
        });
    }
    usable.truncate(count);
    Ok(usable)
}

impl SearchSpace {
    /// Narrows every non-resolution-coupled parameter to the range spanned by
    /// the elite trials.
    ///
    /// Numeric bounds become the elites' `[min, max]` on the transformed
    /// scale, widened by `margin` times that span, never narrower than 5% of
    /// the declared range and never outside the current bounds. Categoricals
    /// keep only the choices the elites used. Parameters that no elite has
    /// active keep their bounds.
    pub fn refine(&self, trials: &[Trial], q: f64, margin: f64) -> Result<SearchSpace, SpaceError> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(SpaceError::InvalidArgument(format!("margin {margin} must be >= 0")));
        }
        let elites = select_elites(trials, q)?;
        let mut params = self.params().to_vec();
        for p in params.iter_mut().filter(|p| !p.resolution_coupled) {
            let values: Vec<&Value> = elites.iter().filter_map(|t| t.config.get(&p.name)).collect();
            if values.is_empty() {
                continue;
            }
            if let Domain::Categorical { choices } = &mut p.domain {
                choices.retain(|c| values.iter().any(|v| v.same(c)));
            } else {
                refine_numeric(p, &values, margin);
            }
        }
        SearchSpace::new(params, self.conditions().to_vec())
    }
}

fn refine_numeric(p: &mut ParamSpec, values: &[&Value], margin: f64) {
    let scale = p.scale();
    let (cur_lo, cur_hi) = p.bounds().expect("numeric");
    let declared = p.declared_bounds();
    let (dlo, dhi) = (scale.forward(declared.0), scale.forward(declared.1));

    let natives: Vec<f64> = values.iter().filter_map(|v| v.as_f64()).collect();
    let emin = natives.iter().copied().fold(f64::INFINITY, f64::min);
    let emax = natives.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mn, mx) = (scale.forward(emin), scale.forward(emax));

    let span = mx - mn;
    let mut lo = (mn - margin * span).max(dlo);
    let mut hi = (mx + margin * span).min(dhi);
    let floor = FLOOR_FRACTION * (dhi - dlo);
    if hi - lo < floor {
        let center = 0.5 * (mn + mx);
        lo = center - 0.5 * floor;
        hi = center + 0.5 * floor;
        if lo < dlo {
            hi += dlo - lo;
            lo = dlo;
        }
        if hi > dhi {
            lo -= hi - dhi;
            hi = dhi;
        }
        lo = lo.max(dlo);
    }

    let (new_lo, new_hi) = match p.domain {
        Domain::Integer { .. } => {
            let mut nl = ((scale.inverse(lo) + 1e-9).floor())
                .min(emin)
                .max(cur_lo);
            let mut nh = ((scale.inverse(hi) - 1e-9).ceil())
                .max(emax)
                .min(cur_hi);
            if nl >= nh {
                if nh < cur_hi {
                    nh += 1.0;
                } else {
                    nl -= 1.0;
                }
            }
            (nl, nh)
        }
        _ => {
            let nl = scale.inverse(lo).min(emin).max(cur_lo);
            let nh = scale.inverse(hi).max(emax).min(cur_hi);
            if nl < nh {
                (nl, nh)
            } else {
                (cur_lo, cur_hi)
            }
        }
    };
    p.declared = Some([declared.0, declared.1]);
    p.set_bounds(new_lo, new_hi);
}
