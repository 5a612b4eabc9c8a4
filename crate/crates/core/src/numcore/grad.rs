//! Loss/gradient pairs and a finite-difference gradient checker.
//!
//! Every analytic gradient in the crate (InfoNCE, the backdoor losses, the
//! network backward passes) is validated against [`finite_diff_check`] in
//! tests, so the checker itself is kept deliberately simple.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::numcore::param::ParamVector;
use crate::numcore::rng::Rng64;

/// A scalar loss together with its gradient.
///
/// Construction fails if either the loss or any gradient entry is non-finite;
/// a NaN caught here points at the offending loss instead of surfacing rounds
/// later as a corrupted model.
#[derive(Debug, Clone)]
pub struct GradResult {
    pub loss: f64,
    pub grad: ParamVector,
}

impl GradResult {
    pub fn new(loss: f64, grad: ParamVector) -> Result<Self> {
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss = {loss}")));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient entry".to_string()));
        }
        Ok(GradResult { loss, grad })
    }
}

/// Compare an analytic gradient against central finite differences at
/// `n_probes` randomly chosen coordinates and return the worst error.
///
/// Per coordinate the numerical derivative is
/// `d = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`; the reported error is
/// relative, `|d - a| / |d|`, when `|d| >= 1e-8`, and absolute otherwise.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &ParamVector,
    analytic: &ParamVector,
    eps: f64,
    n_probes: usize,
    rng: &mut Rng64,
) -> Result<f64>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    if !params.same_layout(analytic) {
        return Err(Error::LayoutMismatch(
            "finite_diff_check: params and analytic gradient".to_string(),
        ));
    }
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::Config(format!("finite_diff_check: eps = {eps}")));
    }
    if params.is_empty() {
        return Err(Error::Degenerate(
            "finite_diff_check: empty parameter vector".to_string(),
        ));
    }

    let n = params.len();
    let probes = sample(rng, n, n_probes.min(n));
    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for idx in probes {
        let orig = work.values()[idx];
        work.values_mut()[idx] = orig + eps;
        let up = loss_fn(&work)?;
        work.values_mut()[idx] = orig - eps;
        let down = loss_fn(&work)?;
        work.values_mut()[idx] = orig;

        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.values()[idx];
        let err = if numeric.abs() >= 1e-8 {
            (numeric - a).abs() / numeric.abs()
        } else {
            (numeric - a).abs()
        };
        worst = worst.max(err);
    }
    Ok(worst)
}
