//! Weighted-KNN evaluation of a frozen encoder.
//!
//! Each query feature votes among its top-k most cosine-similar bank
//! features; every neighbor contributes exp(sim / τ) to its label's score.
//! Used as the cheap per-round training monitor.

use crate::contrastive::{Model, ModelArch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::{cosine_sim, ParamVector};

/// Predict one query via exponentially weighted cosine voting.
///
/// Neighbor order is (similarity descending, bank index ascending); class
/// ties resolve to the smallest class index.
fn knn_predict(
    bank: &[Vec<f64>],
    labels: &[u16],
    n_classes: usize,
    query: &[f64],
    k: usize,
    tau: f64,
) -> Result<u16> {
    let mut sims: Vec<(f64, usize)> = bank
        .iter()
        .enumerate()
        .map(|(i, b)| Ok((cosine_sim(query, b)?, i)))
        .collect::<Result<_>>()?;
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < sims.len() {
        sims.select_nth_unstable_by(k - 1, by_rank);
        sims.truncate(k);
    }
    sims.sort_unstable_by(by_rank);
    let mut scores = vec![0.0f64; n_classes];
    for (sim, idx) in &sims {
        scores[labels[*idx] as usize] += (sim / tau).exp();
    }
    let mut best = 0;
    for c in 1..n_classes {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Ok(best as u16)
}

/// Fraction of `queries` whose weighted-KNN vote over `bank` matches their
/// label. `k` is clamped to the bank size.
pub fn knn_eval(
    params: &ParamVector,
    arch: &ModelArch,
    bank: &Dataset,
    queries: &Dataset,
    k: usize,
    tau: f64,
) -> Result<f64> {
    if bank.is_empty() {
        return Err(Error::Config("knn_eval: empty bank".to_string()));
    }
    if queries.is_empty() {
        return Err(Error::Config("knn_eval: no queries".to_string()));
    }
    if k == 0 {
        return Err(Error::Config("knn_eval: k must be ≥ 1".to_string()));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Config(format!(
            "knn_eval: tau {tau} must be finite and > 0"
        )));
    }
    let n_classes = bank
        .n_classes()
        .ok_or_else(|| Error::Config("knn_eval: bank must be labeled".to_string()))?
        as usize;
    let bank_labels: Vec<u16> = bank
        .labels()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("knn_eval: bank must be labeled".to_string()))?;
    let query_labels: Vec<u16> = queries
        .labels()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config("knn_eval: queries must be labeled".to_string()))?;

    let model = Model::new(arch)?;
    let bank_h = model.encode_batch(params, bank.examples())?;
    let query_h = model.encode_batch(params, queries.examples())?;
    let k = k.min(bank_h.len());

    let mut correct = 0usize;
    for (qh, &label) in query_h.iter().zip(&query_labels) {
        if knn_predict(&bank_h, &bank_labels, n_classes, qh, k, tau)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / query_labels.len() as f64)
}
