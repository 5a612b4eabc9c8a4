//! Benign client training: minibatch SGD on the InfoNCE objective.

use rand::seq::SliceRandom;

use crate::contrastive::arch::{Model, ModelArch};
use crate::contrastive::loss::info_nce_with_grads;
use crate::contrastive::net::Part;
use crate::data::{augment_with, AugmentPolicy, Dataset};
use crate::error::{Error, Result};
use crate::federation::{ClientUpdate, UpdateKind};
use crate::numcore::{GradResult, ParamVector, RngStream};

/// Hyperparameters of benign local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveConfig {
    /// InfoNCE temperature.
    pub temperature: f64,
    /// Samples per minibatch (M); each contributes two views.
    pub batch_size: usize,
    pub local_epochs: usize,
    pub learning_rate: f64,
    pub augment: AugmentPolicy,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.5,
            batch_size: 8,
            local_epochs: 1,
            learning_rate: 0.1,
            augment: AugmentPolicy::contrastive_default(),
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "contrastive temperature {} must be > 0",
                self.temperature
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "contrastive batch_size {} must be >= 2",
                self.batch_size
            )));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be >= 1".to_string()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// InfoNCE loss and gradient with respect to model parameters for one batch
/// of 2M already-augmented views (flattened pixel rows).
pub(crate) fn nce_param_grad(
    model: &Model,
    params: &ParamVector,
    views: &[Vec<f64>],
    tau: f64,
) -> Result<GradResult> {
    let n = views.len();
    let mut enc_traces = Vec::with_capacity(n);
    let mut proj_traces = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for view in views {
        let mut enc_trace = Model::empty_trace();
        let mut proj_trace = Model::empty_trace();
        let h = model.forward_part(params, Part::Encoder, view, Some(&mut enc_trace));
        let zi = model.forward_part(params, Part::Projector, &h, Some(&mut proj_trace));
        enc_traces.push(enc_trace);
        proj_traces.push(proj_trace);
        z.push(zi);
    }
    let (loss, dz) = info_nce_with_grads(&z, tau)?;
    let mut grad = ParamVector::zeros(model.layout());
    for i in 0..n {
        let d_h = model.backward_part(params, Part::Projector, &proj_traces[i], &dz[i], &mut grad);
        model.backward_part(params, Part::Encoder, &enc_traces[i], &d_h, &mut grad);
    }
    GradResult::new(loss, grad)
}

/// One benign client's local step: initialize the local model at the global
/// parameters, run `local_epochs` of minibatch SGD on InfoNCE with two
/// augmented views per sample, and return `delta = local - global`.
///
/// A trailing batch of a single sample is skipped (its loss is identically
/// zero). The global vector is never mutated.
pub fn benign_local_train(
    global: &ParamVector,
    arch: &ModelArch,
    shard: &Dataset,
    cfg: &ContrastiveConfig,
    stream: RngStream,
    client_id: usize,
    round: usize,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    if shard.is_empty() {
        return Err(Error::Config(format!(
            "client {client_id}: empty shard"
        )));
    }
    let model = Model::new(arch)?;
    model.check_params(global)?;

    let mut rng = stream.rng();
    let mut local = global.clone();
    let mut order: Vec<usize> = (0..shard.len()).collect();
    for _epoch in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                continue;
            }
            // Rows k and k+M are the two views of batch sample k.
            let mut views = Vec::with_capacity(2 * batch.len());
            for _view in 0..2 {
                for &idx in batch {
                    views.push(augment_with(shard.get(idx), &mut rng, &cfg.augment).pixels);
                }
            }
            let step = nce_param_grad(&model, &local, &views, cfg.temperature)?;
            local.add_scaled(-cfg.learning_rate, &step.grad)?;
        }
    }
    let delta = local.sub(global)?;
    Ok(ClientUpdate::new(
        delta,
        client_id,
        round,
        UpdateKind::Benign,
        false,
    ))
}
