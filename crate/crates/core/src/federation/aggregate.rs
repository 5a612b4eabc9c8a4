//! Federated averaging of client deltas onto the global parameters.
//!
//! One round moves the global vector by the (optionally weighted) mean of
//! the submitted deltas, scaled by the server learning rate:
//! `G' = G + (eta / K) * sum_i w_i * delta_i` with `K` the number of
//! updates received. Updates are accumulated in client-id order regardless
//! of arrival order, so aggregation is exactly permutation-invariant.

use crate::error::{Error, Result};
use crate::numcore::ParamVector;

use super::{ClientUpdate, ReceivedUpdate};

/// Average client updates into a new global vector.
///
/// `weights`, when given, must align with `updates` (by position, before
/// any internal reordering); omitted weights mean plain averaging.
pub fn aggregate(
    global: &ParamVector,
    updates: &[ClientUpdate],
    eta: f64,
    weights: Option<&[f64]>,
) -> Result<ParamVector> {
    let pairs: Vec<(usize, &ParamVector)> =
        updates.iter().map(|u| (u.client_id, &u.delta)).collect();
    aggregate_pairs(global, pairs, eta, weights)
}

/// [`aggregate`] over server-side updates, used after defenses run.
pub fn aggregate_received(
    global: &ParamVector,
    updates: &[ReceivedUpdate],
    eta: f64,
    weights: Option<&[f64]>,
) -> Result<ParamVector> {
    let pairs: Vec<(usize, &ParamVector)> =
        updates.iter().map(|u| (u.client_id, &u.delta)).collect();
    aggregate_pairs(global, pairs, eta, weights)
}

fn aggregate_pairs(
    global: &ParamVector,
    pairs: Vec<(usize, &ParamVector)>,
    eta: f64,
    weights: Option<&[f64]>,
) -> Result<ParamVector> {
    if pairs.is_empty() {
        return Err(Error::Config("aggregate: no updates".to_string()));
    }
    if !eta.is_finite() {
        return Err(Error::Config(format!("aggregate: eta {eta} not finite")));
    }
    let k = pairs.len() as f64;
    let weights = match weights {
        Some(w) => {
            if w.len() != pairs.len() {
                return Err(Error::Config(format!(
                    "aggregate: {} weights for {} updates",
                    w.len(),
                    pairs.len()
                )));
            }
            for (i, &wi) in w.iter().enumerate() {
                if !wi.is_finite() || wi < 0.0 {
                    return Err(Error::Config(format!(
                        "aggregate: weight {wi} at position {i} must be finite and >= 0"
                    )));
                }
            }
            w.to_vec()
        }
        None => vec![1.0; pairs.len()],
    };

    // Canonical order: client id. Floating-point accumulation then ignores
    // the caller's ordering entirely.
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_unstable_by_key(|&i| pairs[i].0);
    for w in order.windows(2) {
        if pairs[w[0]].0 == pairs[w[1]].0 {
            return Err(Error::Config(format!(
                "aggregate: duplicate update from client {}",
                pairs[w[0]].0
            )));
        }
    }

    let mut next = global.clone();
    for i in order {
        let (id, delta) = pairs[i];
        if !next.same_layout(delta) {
            return Err(Error::Config(format!(
                "aggregate: update from client {id} has a mismatched layout"
            )));
        }
        next.add_scaled(eta * weights[i] / k, delta)?;
    }
    Ok(next)
}
