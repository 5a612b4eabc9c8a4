//! Linear evaluation: multinomial logistic regression on frozen-encoder
//! features, trained by deterministic full-batch gradient descent.

use crate::contrastive::{Model, ModelArch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::ProbeConfig;
use crate::numcore::ParamVector;

/// A trained probe: per-class weight rows with a trailing bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// Row-major `n_classes × (dim + 1)`.
    w: Vec<f64>,
    n_classes: usize,
    dim: usize,
}

impl LinearProbe {
    /// Build a probe from explicit weights, row-major `n_classes × (dim+1)`
    /// with the bias in the last column of each row.
    pub fn from_weights(w: Vec<f64>, n_classes: usize, dim: usize) -> Result<LinearProbe> {
        if n_classes < 2 || dim == 0 || w.len() != n_classes * (dim + 1) {
            return Err(Error::Config(format!(
                "probe weights: {} values for {n_classes} classes × ({dim}+1) columns",
                w.len()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("probe weights".to_string()));
        }
        Ok(LinearProbe { w, n_classes, dim })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn logits(&self, h: &[f64]) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| {
                let row = &self.w[c * (self.dim + 1)..(c + 1) * (self.dim + 1)];
                row[self.dim]
                    + row[..self.dim]
                        .iter()
                        .zip(h)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Argmax class; ties resolve to the smallest class index.
    pub fn predict(&self, h: &[f64]) -> Result<u16> {
        if h.len() != self.dim {
            return Err(Error::LayoutMismatch(format!(
                "probe expects {}-dim features, got {}",
                self.dim,
                h.len()
            )));
        }
        let logits = self.logits(h);
        let mut best = 0;
        for c in 1..self.n_classes {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        Ok(best as u16)
    }

    /// Fraction of feature rows classified as their label.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[u16]) -> Result<f64> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Config(format!(
                "probe accuracy: {} features vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let mut correct = 0usize;
        for (h, &y) in features.iter().zip(labels) {
            if self.predict(h)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Fit by full-batch gradient descent on the softmax cross-entropy with
    /// an L2 penalty on the non-bias weights. Deterministic: zero
    /// initialization, fixed iteration count, no shuffling.
    pub fn fit(
        features: &[Vec<f64>],
        labels: &[u16],
        n_classes: u16,
        cfg: &ProbeConfig,
    ) -> Result<LinearProbe> {
        cfg.validate()?;
        if features.is_empty() {
            return Err(Error::Config("probe fit: no training features".to_string()));
        }
        if features.len() != labels.len() {
            return Err(Error::Config(format!(
                "probe fit: {} features vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "probe fit: n_classes {n_classes} must be ≥ 2"
            )));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|h| h.len() != dim) {
            return Err(Error::Config("probe fit: ragged feature rows".to_string()));
        }
        if labels.iter().any(|&y| y >= n_classes) {
            return Err(Error::Config("probe fit: label outside class range".to_string()));
        }
        let first = labels[0];
        if labels.iter().all(|&y| y == first) {
            return Err(Error::Degenerate(
                "probe fit: training labels are single-class".to_string(),
            ));
        }

        let c = n_classes as usize;
        let cols = dim + 1;
        let n = features.len() as f64;
        let mut probe = LinearProbe {
            w: vec![0.0; c * cols],
            n_classes: c,
            dim,
        };
        let mut grad = vec![0.0f64; c * cols];
        for _ in 0..cfg.probe_iters {
            grad.fill(0.0);
            for (h, &y) in features.iter().zip(labels) {
                let logits = probe.logits(h);
                let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let mut p: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = p.iter().sum();
                for v in &mut p {
                    *v /= z;
                }
                for (cls, pc) in p.iter().enumerate() {
                    let coeff = (pc - if cls == y as usize { 1.0 } else { 0.0 }) / n;
                    let row = &mut grad[cls * cols..(cls + 1) * cols];
                    for (g, x) in row[..dim].iter_mut().zip(h) {
                        *g += coeff * x;
                    }
                    row[dim] += coeff;
                }
            }
            if cfg.l2_penalty > 0.0 {
                for cls in 0..c {
                    for d in 0..dim {
                        grad[cls * cols + d] += cfg.l2_penalty * probe.w[cls * cols + d];
                    }
                }
            }
            for (w, g) in probe.w.iter_mut().zip(&grad) {
                *w -= cfg.probe_lr * g;
            }
        }
        if probe.w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("probe weights diverged".to_string()));
        }
        Ok(probe)
    }
}

pub(crate) fn labeled_features(
    model: &Model,
    params: &ParamVector,
    ds: &Dataset,
    batch: usize,
    what: &str,
) -> Result<(Vec<Vec<f64>>, Vec<u16>)> {
    if ds.is_empty() {
        return Err(Error::Config(format!("{what}: empty dataset")));
    }
    let labels: Vec<u16> = ds
        .labels()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Config(format!("{what}: dataset must be labeled")))?;
    let mut features = Vec::with_capacity(ds.len());
    for chunk in ds.examples().chunks(batch) {
        features.extend(model.encode_batch(params, chunk)?);
    }
    Ok((features, labels))
}

/// Train a probe on the frozen encoder's features of `train`.
pub fn fit_probe(
    params: &ParamVector,
    arch: &ModelArch,
    train: &Dataset,
    cfg: &ProbeConfig,
) -> Result<LinearProbe> {
    let model = Model::new(arch)?;
    let n_classes = train
        .n_classes()
        .ok_or_else(|| Error::Config("probe fit: dataset must be labeled".to_string()))?;
    let (features, labels) = labeled_features(&model, params, train, cfg.eval_batch, "probe fit")?;
    LinearProbe::fit(&features, &labels, n_classes, cfg)
}

/// Main accuracy: fit on `train`, report clean-test accuracy on `test`.
pub fn linear_probe(
    params: &ParamVector,
    arch: &ModelArch,
    train: &Dataset,
    test: &Dataset,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let probe = fit_probe(params, arch, train, cfg)?;
    let model = Model::new(arch)?;
    let (features, labels) =
        labeled_features(&model, params, test, cfg.eval_batch, "probe eval")?;
    probe.accuracy(&features, &labels)
}
