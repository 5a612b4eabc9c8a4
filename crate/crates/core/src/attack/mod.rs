//! Backdoor attack machinery: target specifications, the feature-similarity
//! injection loss, malicious local training, update scaling, and attacker
//! rosters for centralized/decentralized coordination.

mod loss;
mod roster;
mod train;

pub use loss::backdoor_loss;
pub use roster::{build_attacker_roster, AttackMode, AttackerRoster};
pub use train::{malicious_local_train, scale_update, AttackConfig, Schedule};

use crate::data::{Example, Trigger};
use crate::error::{Error, Result};

/// One backdoor target: a downstream task, the class to hijack, the trigger
/// that marks inputs, and reference examples of the target class.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    /// Index of the target downstream task.
    pub task_id: usize,
    /// Class the attacker wants triggered inputs mapped to.
    pub target_class: u16,
    pub trigger: Trigger,
    /// Reference examples drawn from `target_class` of the downstream
    /// dataset; at least one.
    pub references: Vec<Example>,
}

impl TargetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::Config(format!(
                "target task {} has no reference examples",
                self.task_id
            )));
        }
        for (j, r) in self.references.iter().enumerate() {
            if r.label != Some(self.target_class) {
                return Err(Error::Config(format!(
                    "target task {}: reference {j} labeled {:?}, expected {}",
                    self.task_id, r.label, self.target_class
                )));
            }
        }
        Ok(())
    }

    /// Number of reference examples r_i.
    pub fn r(&self) -> usize {
        self.references.len()
    }
}
