//! Per-round client selection.
//!
//! Benign rounds draw `clients_per_round` participants uniformly without
//! replacement from the benign pool (ids `n_attackers..n_clients`), so
//! attackers sit out warm-up entirely. On an attack round every attacker
//! joins and the remaining slots are filled from the benign pool.

use rand::seq::index::sample;

use crate::attack::Schedule;
use crate::error::{Error, Result};
use crate::numcore::RngStream;

use super::FederationConfig;

/// Choose the participants for round `t`.
///
/// `t` counts rounds within the schedule's frame: pass the attack-phase
/// round index together with `Some(schedule)` during the attack phase, and
/// `None` during warm-up (which never admits attackers). The result is
/// sorted ascending and free of duplicates.
///
/// Errors when the benign pool cannot fill the non-attacker slots.
pub fn select_clients(
    t: usize,
    cfg: &FederationConfig,
    schedule: Option<Schedule>,
    stream: RngStream,
) -> Result<Vec<usize>> {
    cfg.validate()?;
    let attack_round = cfg.n_attackers > 0
        && match schedule {
            Some(s) => s.is_attack_round(t),
            None => false,
        };

    let n_benign = cfg.n_clients - cfg.n_attackers;
    let want_benign = if attack_round {
        cfg.clients_per_round - cfg.n_attackers
    } else {
        cfg.clients_per_round
    };
    if want_benign > n_benign {
        return Err(Error::Config(format!(
            "round {t}: need {want_benign} benign clients but the pool has {n_benign}"
        )));
    }

    let mut rng = stream.rng();
    let mut chosen: Vec<usize> = if attack_round {
        (0..cfg.n_attackers).collect()
    } else {
        Vec::new()
    };
    chosen.extend(
        sample(&mut rng, n_benign, want_benign)
            .into_iter()
            .map(|i| cfg.n_attackers + i),
    );
    chosen.sort_unstable();
    Ok(chosen)
}
