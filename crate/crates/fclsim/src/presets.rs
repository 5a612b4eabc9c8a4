//! Canned experiment scenarios.
//!
//! Each preset is a key-value layer applied between the defaults and any
//! user config file, so `fclsim run overrides.cfg --preset oneshot` starts
//! from the scenario and overrides individual keys.
//!
//! The attack scenarios share a common shape: 16 clients, 10 selected per
//! round, 3 attackers, 20 warm-up rounds, then 40 attack rounds (60 for
//! one-shot so two full sawtooth periods fit). One-shot presets replace
//! `gamma` with K / (eta * n_attackers) so the three scaled updates plant
//! exactly the attackers' average model, and evaluate every round to
//! resolve the sawtooth.

use crate::config::{resolve, KvLayer, ResolvedConfig};
use crate::Result;

pub const PRESET_NAMES: [&str; 9] = [
    "baseline_noattack",
    "multishot_iid",
    "multishot_noniid",
    "oneshot",
    "foolsgold_centralized",
    "foolsgold_decentralized",
    "clipnoise_multishot",
    "clipnoise_oneshot",
    "foreign_attacker_data",
];

fn attack_base(layer: &mut KvLayer) {
    layer.push("federation.n_attackers", 3);
    layer.push("attack.mode", "centralized");
    layer.push("attack.targets", 3);
    // Unscaled poisoned updates are diluted 3:7 every round; the faster
    // malicious descent and the larger patch keep injection ahead of the
    // benign healing even when attacker shards are class-skewed.
    layer.push("attack.lr", 0.1);
    layer.push("attack.trigger_side", 8);
}

fn skewed_base(layer: &mut KvLayer) {
    layer.push("data.partition", "dirichlet");
    // Mild skew: shares differ by several-fold between clients but every
    // shard still sees every class. Harsher skew leaves some shards missing
    // classes outright, which stops being a partition effect and becomes a
    // coverage cliff for whichever clients drew the short straw.
    layer.push("data.dirichlet_alpha", 2.0);
}

fn oneshot_base(layer: &mut KvLayer) {
    attack_base(layer);
    layer.push("attack.schedule", "oneshot");
    layer.push("attack.period", 25);
    // K / (eta * n_attackers): the scaled trio replaces the global model.
    layer.push("attack.gamma", 10.0 / 3.0);
    // A one-shot attacker prepares off-line, so it can afford far more local
    // epochs than the per-round multi-shot schedule; the first injection has
    // no residue to build on and needs the full implant in one go. The
    // smaller patch matters for the other half of the sawtooth: benign
    // training reclaims a 6x6 corner within a period, where the multi-shot
    // 8x8 patch would linger near ceiling.
    layer.push("attack.epochs", 50);
    layer.push("attack.trigger_side", 6);
    layer.push("federation.rounds", 60);
    layer.push("federation.eval_every", 1);
}

/// The key-value layer for a preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<KvLayer> {
    if !PRESET_NAMES.contains(&name) {
        return None;
    }
    let mut layer = KvLayer::named(&format!("preset:{name}"));
    match name {
        "baseline_noattack" => {}
        "multishot_iid" => attack_base(&mut layer),
        "multishot_noniid" => {
            attack_base(&mut layer);
            skewed_base(&mut layer);
        }
        "oneshot" => oneshot_base(&mut layer),
        "foolsgold_centralized" => {
            attack_base(&mut layer);
            skewed_base(&mut layer);
            layer.push("defense.kind", "foolsgold");
        }
        "foolsgold_decentralized" => {
            attack_base(&mut layer);
            layer.push("attack.mode", "decentralized");
            skewed_base(&mut layer);
            layer.push("defense.kind", "foolsgold");
        }
        "clipnoise_multishot" => {
            attack_base(&mut layer);
            layer.push("defense.kind", "clipnoise");
        }
        "clipnoise_oneshot" => {
            oneshot_base(&mut layer);
            layer.push("defense.kind", "clipnoise");
        }
        "foreign_attacker_data" => {
            attack_base(&mut layer);
            layer.push("attack.foreign_data", true);
        }
        _ => unreachable!("name checked against PRESET_NAMES"),
    }
    Some(layer)
}

/// Resolve a preset into a full config (no user file on top).
pub fn preset_config(name: &str) -> Result<ResolvedConfig> {
    let layer = preset(name)
        .ok_or_else(|| crate::HarnessError::Config(format!("unknown preset `{name}`")))?;
    resolve(&[&layer])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AttackModeChoice, DefenseChoice, PartitionChoice, ScheduleChoice};

    #[test]
    fn there_are_exactly_nine_presets() {
        assert_eq!(PRESET_NAMES.len(), 9);
        assert!(PRESET_NAMES.contains(&"foolsgold_decentralized"));
    }

    #[test]
    fn every_preset_resolves_and_validates() {
        for name in PRESET_NAMES {
            let cfg = preset_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.seed, 42, "{name}: presets leave the seed alone");
        }
        assert!(preset("no_such_scenario").is_none());
    }

    #[test]
    fn scenario_shapes_match_their_names() {
        let base = preset_config("baseline_noattack").unwrap();
        assert_eq!(base.federation.n_attackers, 0);
        assert_eq!(base.attack.mode, AttackModeChoice::None);

        let iid = preset_config("multishot_iid").unwrap();
        assert_eq!(iid.data.partition, PartitionChoice::Iid);
        assert_eq!(iid.federation.n_attackers, 3);

        let noniid = preset_config("multishot_noniid").unwrap();
        assert_eq!(noniid.data.partition, PartitionChoice::Dirichlet);

        let oneshot = preset_config("oneshot").unwrap();
        assert_eq!(oneshot.attack.schedule, ScheduleChoice::Oneshot);
        assert_eq!(oneshot.attack.period, 25);
        assert!((oneshot.attack.gamma - 10.0 / 3.0).abs() < 1e-15);
        assert_eq!(oneshot.federation.eval_every, 1);

        let fg_dec = preset_config("foolsgold_decentralized").unwrap();
        assert_eq!(fg_dec.attack.mode, AttackModeChoice::Decentralized);
        assert_eq!(fg_dec.defense.kind, DefenseChoice::Foolsgold);
        assert_eq!(fg_dec.attack.targets, fg_dec.federation.n_attackers);

        let cn = preset_config("clipnoise_oneshot").unwrap();
        assert_eq!(cn.defense.kind, DefenseChoice::Clipnoise);
        assert_eq!(cn.attack.schedule, ScheduleChoice::Oneshot);

        let foreign = preset_config("foreign_attacker_data").unwrap();
        assert!(foreign.attack.foreign_data);
    }
}
