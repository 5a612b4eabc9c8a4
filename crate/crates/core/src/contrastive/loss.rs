//! The InfoNCE contrastive objective with analytic gradients.
//!
//! For a batch of M samples augmented twice, rows `k` and `k + M` of `z` are
//! the two views of sample `k`. With cosine similarity `s(i,k)` and
//! temperature `tau`, the per-view loss is
//!
//! ```text
//! l(i, j) = -log( exp(s(i,j)/tau) / sum_{k != i} exp(s(i,k)/tau) )
//! ```
//!
//! where `j` is `i`'s partner view, and the batch loss is the mean of
//! `l(i, j)` over all 2M ordered positive pairs.

use crate::error::{Error, Result};
use crate::numcore::{dot, l2_norm_slice, GradResult, Layout, ParamVector};

/// Partner row of view `i` in a 2M-row batch.
#[inline]
fn partner(i: usize, m: usize) -> usize {
    if i < m {
        i + m
    } else {
        i - m
    }
}

/// Loss and gradient with respect to the embedding rows.
pub(crate) fn info_nce_with_grads(z: &[Vec<f64>], tau: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = z.len();
    if n < 2 || n % 2 != 0 {
        return Err(Error::Config(format!(
            "info_nce_loss: needs an even number >= 2 of embedding rows, got {n}"
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!(
            "info_nce_loss: temperature {tau}, need > 0"
        )));
    }
    let d = z[0].len();
    let mut norms = Vec::with_capacity(n);
    let mut unit = Vec::with_capacity(n);
    for (i, row) in z.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Config(format!(
                "info_nce_loss: row {i} has {} values, row 0 has {d}",
                row.len()
            )));
        }
        let norm = l2_norm_slice(row);
        if norm < 1e-12 {
            return Err(Error::Degenerate(format!(
                "info_nce_loss: embedding row {i} has zero norm"
            )));
        }
        unit.push(row.iter().map(|v| v / norm).collect::<Vec<f64>>());
        norms.push(norm);
    }
    let m = n / 2;

    // Full cosine similarity matrix over unit rows.
    let mut sims = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..i {
            let s = dot(&unit[i], &unit[k]);
            sims[i][k] = s;
            sims[k][i] = s;
        }
    }

    let mut loss = 0.0;
    let mut dz = vec![vec![0.0; d]; n];
    for i in 0..n {
        let j = partner(i, m);
        // log-sum-exp over k != i, stabilized by the max logit.
        let mut max_logit = f64::NEG_INFINITY;
        for k in 0..n {
            if k != i {
                max_logit = max_logit.max(sims[i][k] / tau);
            }
        }
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += ((sims[i][k] / tau) - max_logit).exp();
            }
        }
        let lse = max_logit + denom.ln();
        loss += lse - sims[i][j] / tau;

        for k in 0..n {
            if k == i {
                continue;
            }
            let p = ((sims[i][k] / tau) - lse).exp();
            let indicator = if k == j { 1.0 } else { 0.0 };
            // d loss / d s(i,k), already including the 1/n batch mean.
            let c = (p - indicator) / (n as f64 * tau);
            if c == 0.0 {
                continue;
            }
            // s(i,k) = unit_i · unit_k; chain through the normalization.
            let (s, ni, nk) = (sims[i][k], norms[i], norms[k]);
            for t in 0..d {
                dz[i][t] += c * (unit[k][t] - s * unit[i][t]) / ni;
                dz[k][t] += c * (unit[i][t] - s * unit[k][t]) / nk;
            }
        }
    }
    loss /= n as f64;
    Ok((loss, dz))
}

/// InfoNCE loss over a 2M-row embedding matrix; the gradient is with respect
/// to `z` (layout: single tensor `"z"` of shape `[2M, d]`).
pub fn info_nce_loss(z: &[Vec<f64>], tau: f64) -> Result<GradResult> {
    let (loss, dz) = info_nce_with_grads(z, tau)?;
    let d = dz[0].len();
    let layout = Layout::of(&[("z", &[dz.len(), d])]);
    let flat: Vec<f64> = dz.into_iter().flatten().collect();
    GradResult::new(loss, ParamVector::new(flat, layout)?)
}
