//! FoolsGold: similarity-based aggregation reweighting.
//!
//! Clients whose cumulative update histories keep pointing the same way are
//! assumed to be coordinating and get their aggregation weight driven toward
//! zero, while clients contributing dissimilar updates keep weight one. The
//! pardoning step protects an honest client that happens to resemble an
//! attacker: when a peer has an even more similar own-peer, the similarity
//! toward that peer is discounted before weights are formed.

use crate::error::Result;
use crate::numcore::{cosine_sim, ParamVector};

/// Per-client aggregation weights in `[0, 1]` from cumulative update
/// histories (one entry per submitting client, aligned with the round's
/// updates; `None` means the client has no history yet).
///
/// Clients with a missing or zero-norm history receive weight 1 and are
/// excluded from the similarity computation. If fewer than two clients have
/// usable histories there is nothing to compare and every weight is 1.
pub fn foolsgold_weights(
    histories: &[Option<&ParamVector>],
    epsilon: f64,
) -> Result<Vec<f64>> {
    let n = histories.len();
    let mut weights = vec![1.0; n];
    let active: Vec<usize> = (0..n)
        .filter(|&i| histories[i].map(|h| h.l2() > epsilon).unwrap_or(false))
        .collect();
    let m = active.len();
    if m < 2 {
        return Ok(weights);
    }

    // Pairwise cosine similarities between active histories; the diagonal
    // stays at 0 so it never wins a row maximum.
    let mut cs = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in (a + 1)..m {
            let sim = cosine_sim(
                histories[active[a]].unwrap().values(),
                histories[active[b]].unwrap().values(),
            )?;
            cs[a][b] = sim;
            cs[b][a] = sim;
        }
    }
    let row_max = |cs: &Vec<Vec<f64>>, a: usize| -> f64 {
        cs[a].iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let v: Vec<f64> = (0..m).map(|a| row_max(&cs, a)).collect();

    // Pardoning: if peer b looks more suspicious than a (v_b > v_a), discount
    // a's similarity toward b so a is not punished for resembling b.
    for a in 0..m {
        for b in 0..m {
            if a != b && v[b] > v[a] && v[a] > 0.0 {
                cs[a][b] *= v[a] / v[b];
            }
        }
    }

    let mut w: Vec<f64> = (0..m)
        .map(|a| (1.0 - row_max(&cs, a)).clamp(0.0, 1.0))
        .collect();
    let max_w = w.iter().fold(0.0f64, |acc, x| acc.max(*x));
    if max_w <= epsilon {
        // Everyone is maximally similar to someone; zero all active weights.
        for &i in &active {
            weights[i] = 0.0;
        }
        return Ok(weights);
    }

    for wi in &mut w {
        *wi /= max_w;
        // Logit sharpening: values above the saturation point map to 1,
        // values below it to 0, squashing the mid range.
        let logit = if *wi >= 1.0 {
            f64::INFINITY
        } else {
            (*wi / (1.0 - *wi)).ln()
        };
        *wi = (logit + 0.5).clamp(0.0, 1.0);
    }
    for (&i, wi) in active.iter().zip(&w) {
        weights[i] = *wi;
    }
    Ok(weights)
}
