//! `fclsim` — run, validate, and list federated contrastive learning
//! experiments.
//!
//! Configuration is resolved in layers: built-in defaults, then the
//! optional `--preset`, then the config file, then `--seed`/`--out`
//! overrides. `FCLSIM_THREADS` caps the worker threads used for parallel
//! client training.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fclsim::config::{parse_kv_file, resolve, KvLayer, ResolvedConfig};
use fclsim::presets::{preset, PRESET_NAMES};
use fclsim::runner::{run, validate_only};
use fclsim::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "fclsim", version, about = "Federated contrastive learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        /// Flat key-value config file (dotted keys, `key = value` lines).
        config: Option<PathBuf>,
        /// Start from a named preset; the config file, if any, overrides it.
        #[arg(long)]
        preset: Option<String>,
        /// Override the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in experiment presets.
    Presets,
    /// Resolve and validate a config without running it.
    Validate {
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
}

fn resolve_layers(
    config: Option<&PathBuf>,
    preset_name: Option<&str>,
    seed: Option<u64>,
    out: Option<&PathBuf>,
) -> Result<ResolvedConfig> {
    if config.is_none() && preset_name.is_none() {
        return Err(HarnessError::Config(
            "nothing to do: provide a config file, a --preset, or both".to_string(),
        ));
    }
    let mut layers: Vec<KvLayer> = Vec::new();
    if let Some(name) = preset_name {
        layers.push(preset(name).ok_or_else(|| {
            HarnessError::Config(format!(
                "unknown preset `{name}`; run `fclsim presets` for the list"
            ))
        })?);
    }
    if let Some(path) = config {
        layers.push(parse_kv_file(path)?);
    }
    let mut overrides = KvLayer::named("command line");
    if let Some(seed) = seed {
        overrides.push("seed", seed);
    }
    if let Some(out) = out {
        overrides.push("out.dir", out.display());
    }
    layers.push(overrides);
    let refs: Vec<&KvLayer> = layers.iter().collect();
    let mut cfg = resolve(&refs)?;
    cfg.threads = threads_from_env()?;
    Ok(cfg)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("FCLSIM_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                HarnessError::Config(format!(
                    "FCLSIM_THREADS must be a positive integer, got `{v}`"
                ))
            })?;
            if n == 0 {
                return Err(HarnessError::Config(
                    "FCLSIM_THREADS must be a positive integer, got `0`".to_string(),
                ));
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(HarnessError::Config(format!("FCLSIM_THREADS: {e}"))),
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            preset,
            seed,
            out,
        } => {
            let cfg = resolve_layers(config.as_ref(), preset.as_deref(), seed, out.as_ref())?;
            let done = run(&cfg)?;
            println!(
                "run complete: {} rounds, seed {}, artifacts in {}",
                done.records.len(),
                cfg.seed,
                done.out_dir.display()
            );
            for (i, (rep, target)) in done
                .reports
                .iter()
                .zip(&done.experiment.monitor_targets)
                .enumerate()
            {
                println!(
                    "target {i} (class {}): asr {:.4}  main_acc {:.4}  knn_acc {:.4}",
                    target.target_class, rep.asr, rep.main_acc, rep.knn_acc
                );
            }
            Ok(())
        }
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Validate { config, preset } => {
            let cfg = resolve_layers(config.as_ref(), preset.as_deref(), None, None)?;
            validate_only(&cfg)?;
            println!("config ok (hash {})", cfg.hash());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
