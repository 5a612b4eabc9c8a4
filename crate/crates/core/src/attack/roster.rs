//! Assignment of backdoor targets to attackers.

use crate::attack::TargetSpec;
use crate::error::{Error, Result};

/// How attackers split the target set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMode {
    /// Every attacker pursues the full target set.
    Centralized,
    /// Each attacker owns exactly one target; requires as many attackers as
    /// targets.
    Decentralized,
}

/// Attacker-id (0-based, attackers occupy the lowest client ids) → the
/// targets that attacker injects.
#[derive(Debug, Clone)]
pub struct AttackerRoster {
    assignments: Vec<Vec<TargetSpec>>,
}

impl AttackerRoster {
    pub fn n_attackers(&self) -> usize {
        self.assignments.len()
    }

    pub fn entry(&self, attacker_id: usize) -> &[TargetSpec] {
        &self.assignments[attacker_id]
    }

    /// All distinct targets across attackers, in task order.
    pub fn all_targets(&self) -> Vec<&TargetSpec> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for entry in &self.assignments {
            for t in entry {
                if seen.insert(t.task_id) {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// Build the per-attacker target assignment for the given mode.
pub fn build_attacker_roster(
    mode: AttackMode,
    n_attackers: usize,
    targets: Vec<TargetSpec>,
) -> Result<AttackerRoster> {
    if n_attackers == 0 {
        return Err(Error::Config("roster: n_attackers = 0".to_string()));
    }
    if targets.is_empty() {
        return Err(Error::Config("roster: no targets".to_string()));
    }
    for t in &targets {
        t.validate()?;
    }
    let assignments = match mode {
        AttackMode::Centralized => vec![targets; n_attackers],
        AttackMode::Decentralized => {
            if n_attackers != targets.len() {
                return Err(Error::Config(format!(
                    "decentralized attack needs one attacker per target \
                     ({n_attackers} attackers, {} targets)",
                    targets.len()
                )));
            }
            targets.into_iter().map(|t| vec![t]).collect()
        }
    };
    Ok(AttackerRoster { assignments })
}
