//! Turn a [`ResolvedConfig`] into a runnable [`Experiment`].
//!
//! Data layout: one labeled pool (synthetic or loaded from file) is split
//! by index residue — every `holdout_every`-th example forms the held-out
//! evaluation split, the rest is the training split. Clients partition the
//! training split; the downstream probe trains on the training split and
//! tests on the held-out split, which also serves as KNN bank (train) and
//! queries (held-out). Monitor targets exist even in attack-free runs so
//! baselines report chance-level ASR on the same triggers.

use std::path::Path;

use fcl_core::attack::{build_attacker_roster, AttackMode, TargetSpec};
use fcl_core::contrastive::ModelArch;
use fcl_core::data::{generate_synthetic, load_dataset, partition, Dataset, Trigger};
use fcl_core::federation::{DownstreamTask, EarlyStop, Experiment, MonitorSpec};

use crate::config::{AttackModeChoice, ResolvedConfig};
use crate::{config_err, Result};

/// Salt for the attacker's private data draw, so `attack.foreign_data`
/// produces a pool disjoint from the benign one under the same seed.
const FOREIGN_DATA_SALT: u64 = 0x464F_5245;

/// A white square whose side comes from the config (0 = auto, scaled to the
/// image), cycling through the image corners so concurrent targets stay
/// visually distinct.
fn square_trigger(shape: (usize, usize, usize), id: usize, side: usize) -> Result<Trigger> {
    let (c, h, w) = shape;
    let side = if side == 0 {
        (3 * h.min(w)).div_ceil(8)
    } else {
        side
    };
    if side > h.min(w) {
        return Err(config_err(format!(
            "trigger side {side} exceeds image side {}",
            h.min(w)
        )));
    }
    let corners = [
        (h - side, w - side),
        (0, 0),
        (0, w - side),
        (h - side, 0),
    ];
    let position = corners[id % corners.len()];
    Trigger::new(vec![1.0; c * side * side], (c, side, side), position, id).map_err(config_err)
}

fn base_dataset(cfg: &ResolvedConfig) -> Result<Dataset> {
    let shape = (cfg.data.channels, cfg.data.height, cfg.data.width);
    if cfg.data.file.is_empty() {
        generate_synthetic(
            cfg.data.n_classes,
            cfg.data.per_class,
            shape,
            cfg.data.class_separation,
            cfg.data.noise,
            cfg.seed,
        )
        .map_err(config_err)
    } else {
        let ds = load_dataset(Path::new(&cfg.data.file)).map_err(config_err)?;
        if ds.n_classes().is_none() {
            return Err(config_err(format!(
                "data.file {}: dataset is unlabeled",
                cfg.data.file
            )));
        }
        if ds.shape() != shape {
            return Err(config_err(format!(
                "data.file {}: shape {:?} does not match configured {:?}",
                cfg.data.file,
                ds.shape(),
                shape
            )));
        }
        Ok(ds)
    }
}

/// Build the full experiment: datasets, shards, roster, and monitors.
pub fn assemble(cfg: &ResolvedConfig) -> Result<Experiment> {
    cfg.validate()?;
    let shape = (cfg.data.channels, cfg.data.height, cfg.data.width);
    let pool = base_dataset(cfg)?;
    let n_classes = pool
        .n_classes()
        .expect("base_dataset guarantees labels") as usize;

    let held_out: Vec<usize> = (0..pool.len())
        .filter(|i| i % cfg.data.holdout_every == 0)
        .collect();
    let training: Vec<usize> = (0..pool.len())
        .filter(|i| i % cfg.data.holdout_every != 0)
        .collect();
    if training.is_empty() || held_out.is_empty() {
        return Err(config_err(format!(
            "{} examples cannot be split with holdout_every = {}",
            pool.len(),
            cfg.data.holdout_every
        )));
    }
    let train = pool.subset(&training).map_err(config_err)?;
    let test = pool.subset(&held_out).map_err(config_err)?;

    let parts = partition(
        &train,
        cfg.federation.n_clients,
        cfg.partition_mode(),
        cfg.seed,
    )
    .map_err(config_err)?;
    let shards: Vec<Dataset> = (0..cfg.federation.n_clients)
        .map(|i| train.subset(parts.client(i)))
        .collect::<fcl_core::Result<_>>()
        .map_err(config_err)?;

    let mut targets = Vec::with_capacity(cfg.attack.targets);
    for i in 0..cfg.attack.targets {
        let target_class = (i % n_classes) as u16;
        let trigger = square_trigger(shape, i, cfg.attack.trigger_side)?;
        let ref_idx: Vec<usize> = (0..train.len())
            .filter(|&j| train.get(j).label == Some(target_class))
            .take(cfg.attack.refs)
            .collect();
        if ref_idx.len() < cfg.attack.refs {
            return Err(config_err(format!(
                "target {i}: class {target_class} has only {} training examples for {} references",
                ref_idx.len(),
                cfg.attack.refs
            )));
        }
        targets.push(TargetSpec {
            task_id: 0,
            target_class,
            trigger,
            references: train.subset(&ref_idx).map_err(config_err)?.examples().to_vec(),
        });
    }

    let roster = match cfg.attack.mode {
        AttackModeChoice::None => None,
        AttackModeChoice::Centralized => Some(
            build_attacker_roster(
                AttackMode::Centralized,
                cfg.federation.n_attackers,
                targets.clone(),
            )
            .map_err(config_err)?,
        ),
        AttackModeChoice::Decentralized => Some(
            build_attacker_roster(
                AttackMode::Decentralized,
                cfg.federation.n_attackers,
                targets.clone(),
            )
            .map_err(config_err)?,
        ),
    };

    let attacker_data: Vec<Dataset> = if cfg.federation.n_attackers == 0 {
        Vec::new()
    } else if cfg.attack.foreign_data {
        let foreign = generate_synthetic(
            cfg.data.n_classes,
            cfg.data.per_class,
            shape,
            cfg.data.class_separation,
            cfg.data.noise,
            cfg.seed ^ FOREIGN_DATA_SALT,
        )
        .map_err(config_err)?;
        vec![foreign; cfg.federation.n_attackers]
    } else if cfg.attack.mode == AttackModeChoice::Centralized {
        // One adversary drives all sybil clients, so they share one pooled
        // dataset — this is what makes their updates near-identical in
        // parameter space (and thus catchable by similarity defenses).
        let pooled: Vec<_> = shards[..cfg.federation.n_attackers]
            .iter()
            .flat_map(|s| s.examples().iter().cloned())
            .collect();
        let pooled =
            Dataset::new(shape, pooled, Some(cfg.data.n_classes)).map_err(config_err)?;
        vec![pooled; cfg.federation.n_attackers]
    } else {
        // Independent adversaries: each trains on its own shard.
        shards[..cfg.federation.n_attackers].to_vec()
    };

    Ok(Experiment {
        fed: cfg.federation_config(),
        arch: ModelArch::default_mlp(shape),
        contrastive: cfg.contrastive_config(),
        attack: cfg.attack_config(),
        defense: cfg.defense_spec(),
        probe: cfg.probe_config(),
        shards,
        attacker_data,
        roster,
        monitor_targets: targets,
        downstream: vec![DownstreamTask {
            train: train.clone(),
            test: test.clone(),
        }],
        monitor: MonitorSpec {
            bank: train,
            queries: test,
        },
        eval_every: cfg.federation.eval_every,
        early_stop: cfg.federation.early_stop.then(EarlyStop::default),
        threads: cfg.threads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset_config;
    use fcl_core::data::save_dataset;

    #[test]
    fn every_preset_assembles_into_a_valid_experiment() {
        for name in crate::presets::PRESET_NAMES {
            let cfg = preset_config(name).unwrap();
            let exp = assemble(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
            exp.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(exp.monitor_targets.len(), 3, "{name}");
            assert_eq!(exp.shards.len(), 16, "{name}");
        }
    }

    #[test]
    fn splits_cover_the_pool_without_overlap() {
        let cfg = preset_config("baseline_noattack").unwrap();
        let exp = assemble(&cfg).unwrap();
        let task = &exp.downstream[0];
        assert_eq!(
            task.train.len() + task.test.len(),
            cfg.data.per_class * cfg.data.n_classes as usize
        );
        // Residue split keeps every class in both sides.
        for split in [&task.train, &task.test] {
            let mut seen = vec![false; cfg.data.n_classes as usize];
            for l in split.labels().flatten() {
                seen[l as usize] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
        let shard_total: usize = exp.shards.iter().map(Dataset::len).sum();
        assert_eq!(shard_total, task.train.len());
    }

    #[test]
    fn targets_get_distinct_triggers_and_cycled_classes() {
        let cfg = preset_config("multishot_iid").unwrap();
        let exp = assemble(&cfg).unwrap();
        let classes: Vec<u16> = exp.monitor_targets.iter().map(|t| t.target_class).collect();
        assert_eq!(classes, vec![0, 1, 2]);
        let positions: Vec<(usize, usize)> = exp
            .monitor_targets
            .iter()
            .map(|t| t.trigger.position)
            .collect();
        assert_eq!(positions.len(), 3);
        assert!(positions.windows(2).all(|w| w[0] != w[1]));
        for t in &exp.monitor_targets {
            assert_eq!(t.references.len(), cfg.attack.refs);
        }
    }

    #[test]
    fn trigger_side_scales_with_the_image_and_respects_overrides() {
        let mut cfg = preset_config("multishot_iid").unwrap();
        cfg.attack.trigger_side = 0;
        let exp = assemble(&cfg).unwrap();
        // Auto side: ceil(3 * 16 / 8) = 6.
        for t in &exp.monitor_targets {
            assert_eq!(t.trigger.patch_shape, (3, 6, 6));
        }

        let mut small = cfg.clone();
        small.attack.trigger_side = 2;
        let exp = assemble(&small).unwrap();
        assert_eq!(exp.monitor_targets[0].trigger.patch_shape, (3, 2, 2));
        assert_eq!(exp.monitor_targets[0].trigger.position, (14, 14));

        let mut huge = cfg;
        huge.attack.trigger_side = 17;
        assert!(assemble(&huge).is_err());
    }

    #[test]
    fn foreign_attacker_data_differs_from_own_shards() {
        let cfg = preset_config("foreign_attacker_data").unwrap();
        let exp = assemble(&cfg).unwrap();
        assert_eq!(exp.attacker_data.len(), 3);
        // All attackers share one foreign pool of full size.
        assert_eq!(
            exp.attacker_data[0].len(),
            cfg.data.per_class * cfg.data.n_classes as usize
        );
        assert_ne!(
            exp.attacker_data[0].get(0).pixels,
            exp.shards[0].get(0).pixels
        );
    }

    #[test]
    fn dataset_files_round_trip_through_assembly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.fcld");
        let cfg0 = preset_config("baseline_noattack").unwrap();
        let pool = super::base_dataset(&cfg0).unwrap();
        save_dataset(&pool, &path).unwrap();

        let mut cfg = cfg0.clone();
        cfg.data.file = path.display().to_string();
        let exp = assemble(&cfg).unwrap();
        assert_eq!(
            exp.downstream[0].train.len() + exp.downstream[0].test.len(),
            pool.len()
        );

        // A shape mismatch is caught up front.
        cfg.data.height = 32;
        cfg.data.width = 32;
        let err = assemble(&cfg).unwrap_err();
        assert!(err.to_string().contains("shape"), "{err}");
    }
}
