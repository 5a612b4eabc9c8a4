//! Malicious local training and one-shot update scaling.
//!
//! A malicious client starts from the freshly downloaded global encoder,
//! runs minibatch SGD on the backdoor loss alone (no contrastive term), and
//! submits `delta = local - global` like everyone else. Under the one-shot
//! schedule the update is additionally scaled by γ before upload so a single
//! appearance can overwrite the aggregate.

use rand::seq::SliceRandom;

use crate::attack::loss::{backdoor_batch_grad, GlobalFeatures};
use crate::attack::TargetSpec;
use crate::contrastive::{Model, ModelArch};
use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::federation::{ClientUpdate, UpdateKind};
use crate::numcore::{ParamVector, RngStream};

/// When, within the attack phase, malicious clients strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Attack every round, upload unscaled updates.
    MultiShot,
    /// Attack every `period`-th round (starting with the first), scaled by γ.
    OneShot { period: usize },
}

impl Schedule {
    /// Whether attack-phase round `attack_round` (0-based within the phase)
    /// is an attack round.
    pub fn is_attack_round(&self, attack_round: usize) -> bool {
        match self {
            Schedule::MultiShot => true,
            Schedule::OneShot { period } => attack_round % period == 0,
        }
    }

    /// One-shot updates are scaled; multi-shot ones are not.
    pub fn scales(&self) -> bool {
        matches!(self, Schedule::OneShot { .. })
    }
}

/// Hyperparameters of the backdoor attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub malicious_local_epochs: usize,
    pub learning_rate: f64,
    /// Scale factor γ applied on one-shot rounds.
    pub gamma: f64,
    pub schedule: Schedule,
    /// Minibatch size over the attacker's shadow dataset.
    pub batch_size: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            malicious_local_epochs: 10,
            // Kept below the divergence threshold of the cosine-anchoring
            // terms, whose curvature at the L = G optimum is steep at this
            // scale; larger steps oscillate away from the anchor.
            learning_rate: 0.02,
            gamma: 100.0,
            schedule: Schedule::MultiShot,
            batch_size: 8,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ];
        for (name, l) in lambdas {
            if !l.is_finite() || l < 0.0 {
                return Err(Error::Config(format!("{name} = {l} must be ≥ 0")));
            }
        }
        if lambdas.iter().all(|(_, l)| *l == 0.0) {
            return Err(Error::Config("all lambdas are zero".to_string()));
        }
        if self.malicious_local_epochs == 0 {
            return Err(Error::Config("malicious_local_epochs must be ≥ 1".to_string()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate {} must be finite and ≥ 0",
                self.learning_rate
            )));
        }
        if !self.gamma.is_finite() || self.gamma < 1.0 {
            return Err(Error::Config(format!("gamma {} must be ≥ 1", self.gamma)));
        }
        if let Schedule::OneShot { period } = self.schedule {
            if period == 0 {
                return Err(Error::Config("one-shot period must be ≥ 1".to_string()));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".to_string()));
        }
        Ok(())
    }

    fn lambdas(&self) -> (f64, f64, f64) {
        (self.lambda1, self.lambda2, self.lambda3)
    }
}

/// Multiply an update by γ prior to upload (model replacement).
///
/// The cached norm scales exactly: ‖γδ‖ = γ‖δ‖.
pub fn scale_update(update: ClientUpdate, gamma: f64) -> Result<ClientUpdate> {
    if !gamma.is_finite() || gamma < 1.0 {
        return Err(Error::Config(format!("scale factor {gamma} must be ≥ 1")));
    }
    let mut update = update;
    update.delta.scale_mut(gamma);
    update.l2 *= gamma;
    update.scaled = true;
    Ok(update)
}

/// One malicious client's round: initialize the local encoder at the global
/// snapshot and descend the backdoor loss.
///
/// The global snapshot is frozen: its features enter the loss as constants,
/// computed once and reused across every epoch and minibatch.
#[allow(clippy::too_many_arguments)]
pub fn malicious_local_train(
    global: &ParamVector,
    arch: &ModelArch,
    d_s: &Dataset,
    roster_entry: &[TargetSpec],
    cfg: &AttackConfig,
    stream: RngStream,
    client_id: usize,
    round: usize,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    let model = Model::new(arch)?;
    model.check_params(global)?;
    if d_s.is_empty() {
        return Err(Error::Config("malicious train: empty attacker dataset".to_string()));
    }
    if roster_entry.is_empty() {
        return Err(Error::Config("malicious train: no targets assigned".to_string()));
    }
    for t in roster_entry {
        t.validate()?;
    }

    let examples: Vec<&Example> = d_s.examples().iter().collect();
    let globals = GlobalFeatures::compute(&model, global, &examples, roster_entry)?;

    let mut local = global.clone();
    let mut rng = stream.rng();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..cfg.malicious_local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| examples[i]).collect();
            let batch_globals = globals.select(chunk);
            let res = backdoor_batch_grad(
                &model,
                &local,
                &batch,
                roster_entry,
                &batch_globals,
                cfg.lambdas(),
            )?;
            local.add_scaled(-cfg.learning_rate, &res.grad)?;
        }
    }

    let delta = local.sub(global)?;
    Ok(ClientUpdate::new(
        delta,
        client_id,
        round,
        UpdateKind::Malicious,
        false,
    ))
}
