//! Flat dotted-key experiment configuration.
//!
//! The on-disk format is one `key = value` pair per line; `#` starts a
//! comment line and blank lines are ignored. Keys are dotted paths such as
//! `attack.mode`; values may optionally be wrapped in double quotes, so a
//! flat TOML file parses too. A file may be layered on top of a preset: later layers
//! override earlier ones, while duplicates *within* one layer are errors
//! (reported with their line numbers).
//!
//! Resolution produces a [`ResolvedConfig`] in which every field has a
//! value, all domain-level configs validate, and cross-field rules hold.
//! The configuration hash covers exactly the semantic fields (everything
//! except the output directory), rendered in a fixed key order, so it is
//! stable under key reordering and changes iff a meaningful field changes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use fcl_core::attack::{AttackConfig, Schedule};
use fcl_core::contrastive::ContrastiveConfig;
use fcl_core::data::PartitionMode;
use fcl_core::defense::{ClipThreshold, DefenseKind, DefenseSpec, NoiseSigma};
use fcl_core::eval::ProbeConfig;
use fcl_core::federation::FederationConfig;

use crate::{config_err, Result};

/// One configuration entry; `line` is set for file-sourced pairs.
#[derive(Debug, Clone)]
pub struct Kv {
    pub key: String,
    pub value: String,
    pub line: Option<usize>,
}

/// An ordered layer of key-value pairs from one source.
#[derive(Debug, Clone, Default)]
pub struct KvLayer {
    pub source: String,
    pub pairs: Vec<Kv>,
}

impl KvLayer {
    pub fn named(source: &str) -> Self {
        KvLayer {
            source: source.to_string(),
            pairs: Vec::new(),
        }
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.pairs.push(Kv {
            key: key.to_string(),
            value: value.to_string(),
            line: None,
        });
    }
}

/// Parse a config file into a layer, rejecting malformed lines and
/// duplicate keys (with line numbers).
pub fn parse_kv_file(path: &Path) -> Result<KvLayer> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    parse_kv_text(&text, &path.display().to_string())
}

pub fn parse_kv_text(text: &str, source: &str) -> Result<KvLayer> {
    let mut layer = KvLayer::named(source);
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(format!(
                "{source}:{lineno}: expected `key = value`, got `{line}`"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        // Tolerate TOML-style quoting around the whole value.
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if key.is_empty() {
            return Err(config_err(format!("{source}:{lineno}: empty key")));
        }
        if !key
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '.' || c == '_')
        {
            return Err(config_err(format!(
                "{source}:{lineno}: key `{key}` has characters outside [a-z0-9._]"
            )));
        }
        if let Some(prev) = layer.pairs.iter().find(|kv| kv.key == key) {
            return Err(config_err(format!(
                "{source}:{lineno}: duplicate key `{key}` (first set on line {})",
                prev.line.unwrap_or(0)
            )));
        }
        layer.pairs.push(Kv {
            key: key.to_string(),
            value: value.to_string(),
            line: Some(lineno),
        });
    }
    Ok(layer)
}

/// Data source and partitioning.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub n_classes: u16,
    pub per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub class_separation: f64,
    pub noise: f64,
    pub partition: PartitionChoice,
    pub dirichlet_alpha: f64,
    /// Every `holdout_every`-th example goes to the evaluation split.
    pub holdout_every: usize,
    /// Optional dataset file; when set it replaces synthetic generation.
    pub file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionChoice {
    Iid,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackModeChoice {
    None,
    Centralized,
    Decentralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleChoice {
    Multishot,
    Oneshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefenseChoice {
    None,
    Foolsgold,
    Clipnoise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipChoice {
    Median,
    Fixed(f64),
}

/// Attack scenario settings beyond the core [`AttackConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttackSection {
    pub mode: AttackModeChoice,
    pub targets: usize,
    pub refs: usize,
    pub schedule: ScheduleChoice,
    pub period: usize,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Side of the square trigger patch in pixels; 0 picks
    /// `ceil(3·min(H,W)/8)`, large enough for a small encoder to latch onto.
    pub trigger_side: usize,
    /// Attackers use a freshly drawn synthetic dataset instead of their own
    /// shards.
    pub foreign_data: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefenseSection {
    pub kind: DefenseChoice,
    pub clip: ClipChoice,
    pub sigma_rel: f64,
    /// When positive, an absolute noise sigma that overrides `sigma_rel`.
    pub sigma_abs: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub probe_iters: usize,
    pub probe_lr: f64,
    pub l2: f64,
    pub knn_k: usize,
    pub knn_tau: f64,
    pub batch: usize,
    pub asr_excludes_target: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationSection {
    pub n_clients: usize,
    pub clients_per_round: usize,
    pub server_lr: f64,
    pub rounds: usize,
    pub pretrain_rounds: usize,
    pub n_attackers: usize,
    pub eval_every: usize,
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveSection {
    pub temperature: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
}

/// A fully resolved, validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub federation: FederationSection,
    pub data: DataSection,
    pub contrastive: ContrastiveSection,
    pub attack: AttackSection,
    pub defense: DefenseSection,
    pub eval: EvalSection,
    /// Worker-thread cap (CLI/env only; never part of the config hash).
    pub threads: Option<usize>,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        ResolvedConfig {
            seed: 42,
            out_dir: PathBuf::from("fclsim-out"),
            federation: FederationSection {
                n_clients: 16,
                clients_per_round: 10,
                server_lr: 1.0,
                rounds: 40,
                pretrain_rounds: 20,
                n_attackers: 0,
                eval_every: 5,
                early_stop: false,
            },
            data: DataSection {
                n_classes: 4,
                per_class: 60,
                channels: 3,
                height: 16,
                width: 16,
                class_separation: 1.0,
                noise: 0.05,
                partition: PartitionChoice::Iid,
                dirichlet_alpha: 0.5,
                holdout_every: 4,
                file: String::new(),
            },
            contrastive: ContrastiveSection {
                temperature: 0.5,
                batch: 8,
                epochs: 1,
                lr: 0.1,
            },
            attack: AttackSection {
                mode: AttackModeChoice::None,
                targets: 3,
                refs: 4,
                schedule: ScheduleChoice::Multishot,
                period: 25,
                gamma: 100.0,
                lambda1: 1.0,
                lambda2: 1.0,
                lambda3: 1.0,
                epochs: 10,
                lr: 0.02,
                batch: 8,
                trigger_side: 0,
                foreign_data: false,
            },
            defense: DefenseSection {
                kind: DefenseChoice::None,
                clip: ClipChoice::Median,
                sigma_rel: 1e-3,
                sigma_abs: 0.0,
                epsilon: 1e-9,
            },
            eval: EvalSection {
                probe_iters: 500,
                probe_lr: 0.5,
                l2: 1e-4,
                knn_k: 200,
                knn_tau: 0.07,
                batch: 64,
                asr_excludes_target: false,
            },
            threads: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(kv: &Kv, what: &str) -> Result<T> {
    kv.value.parse::<T>().map_err(|_| {
        config_err(format!(
            "key `{}`: cannot parse `{}` as {what}{}",
            kv.key,
            kv.value,
            kv.line.map(|l| format!(" (line {l})")).unwrap_or_default()
        ))
    })
}

fn parse_bool(kv: &Kv) -> Result<bool> {
    match kv.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(format!(
            "key `{}`: expected true or false, got `{}`",
            kv.key, kv.value
        ))),
    }
}

fn bad_choice(kv: &Kv, allowed: &str) -> crate::HarnessError {
    config_err(format!(
        "key `{}`: `{}` is not one of {allowed}",
        kv.key, kv.value
    ))
}

/// Apply layers in order onto the defaults, then validate.
pub fn resolve(layers: &[&KvLayer]) -> Result<ResolvedConfig> {
    let mut cfg = ResolvedConfig::default();
    for layer in layers {
        for kv in &layer.pairs {
            apply(&mut cfg, kv)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply(cfg: &mut ResolvedConfig, kv: &Kv) -> Result<()> {
    match kv.key.as_str() {
        "seed" => cfg.seed = parse_num(kv, "an unsigned integer")?,
        "out.dir" => cfg.out_dir = PathBuf::from(&kv.value),
        "federation.n_clients" => cfg.federation.n_clients = parse_num(kv, "an integer")?,
        "federation.clients_per_round" => {
            cfg.federation.clients_per_round = parse_num(kv, "an integer")?
        }
        "federation.server_lr" => cfg.federation.server_lr = parse_num(kv, "a number")?,
        "federation.rounds" => cfg.federation.rounds = parse_num(kv, "an integer")?,
        "federation.pretrain_rounds" => {
            cfg.federation.pretrain_rounds = parse_num(kv, "an integer")?
        }
        "federation.n_attackers" => cfg.federation.n_attackers = parse_num(kv, "an integer")?,
        "federation.eval_every" => cfg.federation.eval_every = parse_num(kv, "an integer")?,
        "federation.early_stop" => cfg.federation.early_stop = parse_bool(kv)?,
        "data.n_classes" => cfg.data.n_classes = parse_num(kv, "an integer")?,
        "data.per_class" => cfg.data.per_class = parse_num(kv, "an integer")?,
        "data.channels" => cfg.data.channels = parse_num(kv, "an integer")?,
        "data.height" => cfg.data.height = parse_num(kv, "an integer")?,
        "data.width" => cfg.data.width = parse_num(kv, "an integer")?,
        "data.class_separation" => cfg.data.class_separation = parse_num(kv, "a number")?,
        "data.noise" => cfg.data.noise = parse_num(kv, "a number")?,
        "data.partition" => {
            cfg.data.partition = match kv.value.as_str() {
                "iid" => PartitionChoice::Iid,
                "dirichlet" => PartitionChoice::Dirichlet,
                _ => return Err(bad_choice(kv, "{iid, dirichlet}")),
            }
        }
        "data.dirichlet_alpha" => cfg.data.dirichlet_alpha = parse_num(kv, "a number")?,
        "data.holdout_every" => cfg.data.holdout_every = parse_num(kv, "an integer")?,
        "data.file" => cfg.data.file = kv.value.clone(),
        "contrastive.temperature" => cfg.contrastive.temperature = parse_num(kv, "a number")?,
        "contrastive.batch" => cfg.contrastive.batch = parse_num(kv, "an integer")?,
        "contrastive.epochs" => cfg.contrastive.epochs = parse_num(kv, "an integer")?,
        "contrastive.lr" => cfg.contrastive.lr = parse_num(kv, "a number")?,
        "attack.mode" => {
            cfg.attack.mode = match kv.value.as_str() {
                "none" => AttackModeChoice::None,
                "centralized" => AttackModeChoice::Centralized,
                "decentralized" => AttackModeChoice::Decentralized,
                _ => return Err(bad_choice(kv, "{none, centralized, decentralized}")),
            }
        }
        "attack.targets" => cfg.attack.targets = parse_num(kv, "an integer")?,
        "attack.refs" => cfg.attack.refs = parse_num(kv, "an integer")?,
        "attack.schedule" => {
            cfg.attack.schedule = match kv.value.as_str() {
                "multishot" => ScheduleChoice::Multishot,
                "oneshot" => ScheduleChoice::Oneshot,
                _ => return Err(bad_choice(kv, "{multishot, oneshot}")),
            }
        }
        "attack.period" => cfg.attack.period = parse_num(kv, "an integer")?,
        "attack.gamma" => cfg.attack.gamma = parse_num(kv, "a number")?,
        "attack.lambda1" => cfg.attack.lambda1 = parse_num(kv, "a number")?,
        "attack.lambda2" => cfg.attack.lambda2 = parse_num(kv, "a number")?,
        "attack.lambda3" => cfg.attack.lambda3 = parse_num(kv, "a number")?,
        "attack.epochs" => cfg.attack.epochs = parse_num(kv, "an integer")?,
        "attack.lr" => cfg.attack.lr = parse_num(kv, "a number")?,
        "attack.batch" => cfg.attack.batch = parse_num(kv, "an integer")?,
        "attack.trigger_side" => cfg.attack.trigger_side = parse_num(kv, "an integer")?,
        "attack.foreign_data" => cfg.attack.foreign_data = parse_bool(kv)?,
        "defense.kind" => {
            cfg.defense.kind = match kv.value.as_str() {
                "none" => DefenseChoice::None,
                "foolsgold" => DefenseChoice::Foolsgold,
                "clipnoise" => DefenseChoice::Clipnoise,
                _ => return Err(bad_choice(kv, "{none, foolsgold, clipnoise}")),
            }
        }
        "defense.clip" => {
            cfg.defense.clip = if kv.value == "median" {
                ClipChoice::Median
            } else {
                ClipChoice::Fixed(parse_num(kv, "`median` or a number")?)
            }
        }
        "defense.sigma_rel" => cfg.defense.sigma_rel = parse_num(kv, "a number")?,
        "defense.sigma_abs" => cfg.defense.sigma_abs = parse_num(kv, "a number")?,
        "defense.epsilon" => cfg.defense.epsilon = parse_num(kv, "a number")?,
        "eval.probe_iters" => cfg.eval.probe_iters = parse_num(kv, "an integer")?,
        "eval.probe_lr" => cfg.eval.probe_lr = parse_num(kv, "a number")?,
        "eval.l2" => cfg.eval.l2 = parse_num(kv, "a number")?,
        "eval.knn_k" => cfg.eval.knn_k = parse_num(kv, "an integer")?,
        "eval.knn_tau" => cfg.eval.knn_tau = parse_num(kv, "a number")?,
        "eval.batch" => cfg.eval.batch = parse_num(kv, "an integer")?,
        "eval.asr_excludes_target" => cfg.eval.asr_excludes_target = parse_bool(kv)?,
        other => {
            return Err(config_err(format!(
                "unknown config key `{other}`{}",
                kv.line.map(|l| format!(" (line {l})")).unwrap_or_default()
            )))
        }
    }
    Ok(())
}

impl ResolvedConfig {
    /// Cross-field checks plus construction of every domain config (which
    /// runs their own validation).
    pub fn validate(&self) -> Result<()> {
        if self.attack.mode == AttackModeChoice::None && self.federation.n_attackers > 0 {
            return Err(config_err(format!(
                "federation.n_attackers = {} but attack.mode = none",
                self.federation.n_attackers
            )));
        }
        if self.attack.mode != AttackModeChoice::None && self.federation.n_attackers == 0 {
            return Err(config_err(
                "attack.mode set but federation.n_attackers = 0".to_string(),
            ));
        }
        if self.attack.mode == AttackModeChoice::Decentralized
            && self.attack.targets != self.federation.n_attackers
        {
            return Err(config_err(format!(
                "decentralized attack: attack.targets = {} must equal federation.n_attackers = {}",
                self.attack.targets, self.federation.n_attackers
            )));
        }
        if self.attack.mode != AttackModeChoice::None && self.attack.targets == 0 {
            return Err(config_err("attack.targets = 0".to_string()));
        }
        if self.attack.refs == 0 {
            return Err(config_err("attack.refs = 0".to_string()));
        }
        if self.attack.trigger_side > self.data.height.min(self.data.width) {
            return Err(config_err(format!(
                "attack.trigger_side = {} exceeds the image side min({}, {})",
                self.attack.trigger_side, self.data.height, self.data.width
            )));
        }
        if self.data.holdout_every < 2 {
            return Err(config_err(format!(
                "data.holdout_every = {} must be at least 2",
                self.data.holdout_every
            )));
        }
        if self.data.partition == PartitionChoice::Dirichlet && !(self.data.dirichlet_alpha > 0.0)
        {
            return Err(config_err(format!(
                "data.dirichlet_alpha = {} must be positive",
                self.data.dirichlet_alpha
            )));
        }
        if !(self.defense.sigma_rel >= 0.0) || !(self.defense.sigma_abs >= 0.0) {
            return Err(config_err("defense sigmas must be >= 0".to_string()));
        }
        if self.threads == Some(0) {
            return Err(config_err("threads must be at least 1".to_string()));
        }
        self.federation_config().validate().map_err(config_err)?;
        self.contrastive_config().validate().map_err(config_err)?;
        self.attack_config().validate().map_err(config_err)?;
        self.defense_spec().validate().map_err(config_err)?;
        self.probe_config().validate().map_err(config_err)?;
        Ok(())
    }

    pub fn federation_config(&self) -> FederationConfig {
        FederationConfig {
            n_clients: self.federation.n_clients,
            clients_per_round: self.federation.clients_per_round,
            server_lr: self.federation.server_lr,
            rounds: self.federation.rounds,
            pretrain_rounds: self.federation.pretrain_rounds,
            n_attackers: self.federation.n_attackers,
            seed: self.seed,
        }
    }

    pub fn contrastive_config(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            temperature: self.contrastive.temperature,
            batch_size: self.contrastive.batch,
            local_epochs: self.contrastive.epochs,
            learning_rate: self.contrastive.lr,
            ..ContrastiveConfig::default()
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            lambda1: self.attack.lambda1,
            lambda2: self.attack.lambda2,
            lambda3: self.attack.lambda3,
            malicious_local_epochs: self.attack.epochs,
            learning_rate: self.attack.lr,
            gamma: self.attack.gamma,
            schedule: match self.attack.schedule {
                ScheduleChoice::Multishot => Schedule::MultiShot,
                ScheduleChoice::Oneshot => Schedule::OneShot {
                    period: self.attack.period,
                },
            },
            batch_size: self.attack.batch,
        }
    }

    pub fn defense_spec(&self) -> DefenseSpec {
        DefenseSpec {
            kind: match self.defense.kind {
                DefenseChoice::None => DefenseKind::None,
                DefenseChoice::Foolsgold => DefenseKind::FoolsGold,
                DefenseChoice::Clipnoise => DefenseKind::ClipNoise,
            },
            clip_threshold: match self.defense.clip {
                ClipChoice::Median => ClipThreshold::MedianNorm,
                ClipChoice::Fixed(t) => ClipThreshold::Fixed(t),
            },
            noise_sigma: if self.defense.sigma_abs > 0.0 {
                NoiseSigma::Absolute(self.defense.sigma_abs)
            } else {
                NoiseSigma::Relative(self.defense.sigma_rel)
            },
            epsilon: self.defense.epsilon,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            probe_iters: self.eval.probe_iters,
            probe_lr: self.eval.probe_lr,
            l2_penalty: self.eval.l2,
            knn_k: self.eval.knn_k,
            knn_tau: self.eval.knn_tau,
            eval_batch: self.eval.batch,
            asr_excludes_target_class: self.eval.asr_excludes_target,
        }
    }

    pub fn partition_mode(&self) -> PartitionMode {
        match self.data.partition {
            PartitionChoice::Iid => PartitionMode::Iid,
            PartitionChoice::Dirichlet => PartitionMode::Dirichlet {
                alpha: self.data.dirichlet_alpha,
            },
        }
    }

    /// Every semantic field as canonical `key=value` lines, fixed order.
    /// The output directory and thread cap are deliberately excluded.
    pub fn canonical_pairs(&self) -> Vec<(String, String)> {
        let f = &self.federation;
        let d = &self.data;
        let c = &self.contrastive;
        let a = &self.attack;
        let df = &self.defense;
        let e = &self.eval;
        let mut out: Vec<(String, String)> = Vec::new();
        let mut kv = |k: &str, v: String| out.push((k.to_string(), v));
        kv("seed", self.seed.to_string());
        kv("federation.n_clients", f.n_clients.to_string());
        kv("federation.clients_per_round", f.clients_per_round.to_string());
        kv("federation.server_lr", f.server_lr.to_string());
        kv("federation.rounds", f.rounds.to_string());
        kv("federation.pretrain_rounds", f.pretrain_rounds.to_string());
        kv("federation.n_attackers", f.n_attackers.to_string());
        kv("federation.eval_every", f.eval_every.to_string());
        kv("federation.early_stop", f.early_stop.to_string());
        kv("data.n_classes", d.n_classes.to_string());
        kv("data.per_class", d.per_class.to_string());
        kv("data.channels", d.channels.to_string());
        kv("data.height", d.height.to_string());
        kv("data.width", d.width.to_string());
        kv("data.class_separation", d.class_separation.to_string());
        kv("data.noise", d.noise.to_string());
        kv(
            "data.partition",
            match d.partition {
                PartitionChoice::Iid => "iid".to_string(),
                PartitionChoice::Dirichlet => "dirichlet".to_string(),
            },
        );
        kv("data.dirichlet_alpha", d.dirichlet_alpha.to_string());
        kv("data.holdout_every", d.holdout_every.to_string());
        kv("data.file", d.file.clone());
        kv("contrastive.temperature", c.temperature.to_string());
        kv("contrastive.batch", c.batch.to_string());
        kv("contrastive.epochs", c.epochs.to_string());
        kv("contrastive.lr", c.lr.to_string());
        kv(
            "attack.mode",
            match a.mode {
                AttackModeChoice::None => "none".to_string(),
                AttackModeChoice::Centralized => "centralized".to_string(),
                AttackModeChoice::Decentralized => "decentralized".to_string(),
            },
        );
        kv("attack.targets", a.targets.to_string());
        kv("attack.refs", a.refs.to_string());
        kv(
            "attack.schedule",
            match a.schedule {
                ScheduleChoice::Multishot => "multishot".to_string(),
                ScheduleChoice::Oneshot => "oneshot".to_string(),
            },
        );
        kv("attack.period", a.period.to_string());
        kv("attack.gamma", a.gamma.to_string());
        kv("attack.lambda1", a.lambda1.to_string());
        kv("attack.lambda2", a.lambda2.to_string());
        kv("attack.lambda3", a.lambda3.to_string());
        kv("attack.epochs", a.epochs.to_string());
        kv("attack.lr", a.lr.to_string());
        kv("attack.batch", a.batch.to_string());
        kv("attack.trigger_side", a.trigger_side.to_string());
        kv("attack.foreign_data", a.foreign_data.to_string());
        kv(
            "defense.kind",
            match df.kind {
                DefenseChoice::None => "none".to_string(),
                DefenseChoice::Foolsgold => "foolsgold".to_string(),
                DefenseChoice::Clipnoise => "clipnoise".to_string(),
            },
        );
        kv(
            "defense.clip",
            match df.clip {
                ClipChoice::Median => "median".to_string(),
                ClipChoice::Fixed(t) => t.to_string(),
            },
        );
        kv("defense.sigma_rel", df.sigma_rel.to_string());
        kv("defense.sigma_abs", df.sigma_abs.to_string());
        kv("defense.epsilon", df.epsilon.to_string());
        kv("eval.probe_iters", e.probe_iters.to_string());
        kv("eval.probe_lr", e.probe_lr.to_string());
        kv("eval.l2", e.l2.to_string());
        kv("eval.knn_k", e.knn_k.to_string());
        kv("eval.knn_tau", e.knn_tau.to_string());
        kv("eval.batch", e.batch.to_string());
        kv("eval.asr_excludes_target", e.asr_excludes_target.to_string());
        out
    }

    /// Hex SHA-256 of the canonical semantic pairs.
    pub fn hash(&self) -> String {
        let mut text = String::new();
        for (k, v) in self.canonical_pairs() {
            let _ = writeln!(text, "{k}={v}");
        }
        let digest = Sha256::digest(text.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        hex
    }
}
