//! Central finite-difference gradient checking.
//!
//! The numeric path only evaluates the forward function, so it is
//! independent of the tape's backward rules.

use crate::error::Result;
use crate::params::ParameterSet;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

/// Relative error with a floor on the denominator, so entries whose true
/// gradient is zero are judged on absolute error.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// `select(name, index)` chooses which scalars to probe; `h` is the step.
pub fn check<F>(
    params: &ParameterSet<f64>,
    analytic: &ParameterSet<f64>,
    h: f64,
    floor: f64,
    mut select: impl FnMut(&str, usize) -> bool,
    mut loss: F,
) -> Result<GradCheck>
where
    F: FnMut(&ParameterSet<f64>) -> Result<f64>,
{
    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let len = params.get(&name).map_or(0, |t| t.len());
        let grad = analytic.get(&name).and_then(|t| t.grad()).map(<[f64]>::to_vec);
        for i in 0..len {
            if !select(&name, i) {
                continue;
            }
            let orig = params.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let up = loss(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let down = loss(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.as_ref().map_or(0.0, |g| g[i]);
            let rel = relative_error(a, numeric, floor);
            out.checked += 1;
            if rel > out.max_rel_error || out.worst.is_none() {
                out.max_rel_error = out.max_rel_error.max(rel);
                if rel >= out.max_rel_error {
                    out.worst = Some((name.clone(), i, a, numeric));
                }
            }
        }
    }
    Ok(out)
}
