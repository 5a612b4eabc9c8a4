//! Domain types shared by the federation orchestrator, trainers, and
//! defenses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{l2_norm, ParamVector};

/// Server-side federation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    /// Total client population N.
    pub n_clients: usize,
    /// Clients selected per round, K.
    pub clients_per_round: usize,
    /// Server learning rate applied to the averaged update.
    pub server_lr: f64,
    /// Attack-phase rounds.
    pub rounds: usize,
    /// Benign-only warm-up rounds before the attack phase.
    pub pretrain_rounds: usize,
    /// Number of attackers; attackers own client ids `0..n_attackers`.
    pub n_attackers: usize,
    /// Root seed; every stream in the experiment derives from it.
    pub seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients_per_round == 0 || self.clients_per_round > self.n_clients {
            return Err(Error::Config(format!(
                "clients_per_round {} outside [1, {}]",
                self.clients_per_round, self.n_clients
            )));
        }
        if self.n_attackers > self.clients_per_round {
            return Err(Error::Config(format!(
                "n_attackers {} exceeds clients_per_round {}",
                self.n_attackers, self.clients_per_round
            )));
        }
        if !(self.server_lr > 0.0) || !self.server_lr.is_finite() {
            return Err(Error::Config(format!(
                "server_lr {} must be positive",
                self.server_lr
            )));
        }
        Ok(())
    }
}

/// Whether an update came from benign training or backdoor training.
///
/// This is ground-truth metadata for analysis only; the aggregation and
/// defense paths receive [`ReceivedUpdate`]s with the field stripped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    Benign,
    Malicious,
}

/// A client's round contribution: `delta = local - global`.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub delta: ParamVector,
    pub client_id: usize,
    pub round: usize,
    pub kind: UpdateKind,
    /// True once a scale factor has been applied (one-shot attacks).
    pub scaled: bool,
    /// Cached `l2_norm(delta)`.
    pub l2: f64,
}

impl ClientUpdate {
    pub fn new(
        delta: ParamVector,
        client_id: usize,
        round: usize,
        kind: UpdateKind,
        scaled: bool,
    ) -> Self {
        let l2 = l2_norm(&delta);
        ClientUpdate {
            delta,
            client_id,
            round,
            kind,
            scaled,
            l2,
        }
    }

    /// What the server is allowed to see: id and delta, no kind.
    pub fn strip(&self) -> ReceivedUpdate {
        ReceivedUpdate {
            client_id: self.client_id,
            delta: self.delta.clone(),
        }
    }
}

/// An update as seen by the aggregation path: defenses and averaging operate
/// on these and therefore cannot consult ground-truth kind.
#[derive(Debug, Clone)]
pub struct ReceivedUpdate {
    pub client_id: usize,
    pub delta: ParamVector,
}

/// Per-client state the server keeps across rounds.
///
/// The similarity feature used by FoolsGold is the cumulative sum of all
/// deltas the client has ever submitted; `rounds_selected` tracks how many
/// rounds contributed to that sum.
#[derive(Debug, Clone, Default)]
pub struct ClientHistory {
    pub sum: Option<ParamVector>,
    pub rounds_selected: usize,
}

impl ClientHistory {
    pub fn absorb(&mut self, delta: &ParamVector) -> Result<()> {
        match &mut self.sum {
            Some(sum) => sum.add_scaled(1.0, delta)?,
            None => self.sum = Some(delta.clone()),
        }
        self.rounds_selected += 1;
        Ok(())
    }
}

/// Mutable experiment state owned by the orchestrator.
#[derive(Debug, Clone)]
pub struct FederationState {
    pub global: ParamVector,
    /// Absolute round counter across both phases.
    pub round: usize,
    pub histories: Vec<ClientHistory>,
}

impl FederationState {
    pub fn new(global: ParamVector, n_clients: usize) -> Self {
        FederationState {
            global,
            round: 0,
            histories: vec![ClientHistory::default(); n_clients],
        }
    }
}

/// Which phase a round belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Attack,
}

/// Everything recorded about one round; serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub phase: Phase,
    /// True when attackers participated this round.
    pub attack_round: bool,
    pub selected: Vec<usize>,
    /// Aggregation weights aligned with `selected` (all 1 without a defense;
    /// FoolsGold weights are recorded as-is and need not sum to 1).
    pub weights: Vec<f64>,
    /// L2 norms of the updates as received (post scaling, pre defense),
    /// aligned with `selected`.
    pub update_norms: Vec<f64>,
    /// Weighted-KNN monitoring accuracy, on evaluation rounds.
    pub knn_acc: Option<f64>,
    /// Per-target attack success rate, on evaluation rounds.
    pub asr: Option<Vec<f64>>,
    /// Per-target linear-probe accuracy, on probe rounds.
    pub main_acc: Option<Vec<f64>>,
    /// Wall-clock duration of the round in milliseconds (excluded from
    /// reproducibility comparisons).
    pub wall_ms: f64,
}
