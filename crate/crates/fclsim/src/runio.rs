//! Run artifacts: what gets written where, and the matching readers.
//!
//! A run directory contains exactly four data files plus the manifest:
//!
//! * `rounds.jsonl` — one JSON [`RoundRecord`] per line, in round order.
//! * `summary.csv` — one row per monitor target with final probe accuracy,
//!   ASR, and the shared KNN accuracy.
//! * `cdf.csv` — long-format cosine-similarity CDFs, triggered and clean,
//!   per target.
//! * `timeseries.csv` — wide per-evaluated-round metrics (`asr_i`/`main_i`
//!   columns per target) for plotting.
//! * `manifest.json` — config hash, code version, seed, timestamps, and
//!   the file list.
//!
//! Every writer here has a reader, and the round-trip is tested; the
//! acceptance suite consumes runs exclusively through these readers.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use fcl_core::attack::TargetSpec;
use fcl_core::eval::EvalReport;
use fcl_core::federation::{Phase, RoundRecord};

use crate::{runtime_err, HarnessError, Result};

pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CDF_FILE: &str = "cdf.csv";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Reproducibility sidecar for a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 over the canonical semantic config pairs.
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Data files written by the run, relative to the run directory.
    pub files: Vec<String>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime_err(format!("cannot create {}: {e}", path.display())))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    runtime_err(format!("writing {}: {e}", path.display()))
}

pub fn write_rounds(dir: &Path, records: &[RoundRecord]) -> Result<PathBuf> {
    let path = dir.join(ROUNDS_FILE);
    let mut w = create(&path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| io_err(&path, e))?;
        writeln!(w, "{line}").map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_rounds(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| runtime_err(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// One summary row per monitor target.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub target: usize,
    pub task_id: usize,
    pub target_class: u16,
    pub main_acc: f64,
    pub asr: f64,
    pub knn_acc: f64,
}

pub fn write_summary(
    dir: &Path,
    reports: &[EvalReport],
    targets: &[TargetSpec],
) -> Result<PathBuf> {
    let path = dir.join(SUMMARY_FILE);
    let mut w = create(&path)?;
    writeln!(w, "target,task_id,target_class,main_acc,asr,knn_acc").map_err(|e| io_err(&path, e))?;
    for (i, (rep, t)) in reports.iter().zip(targets).enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{}",
            rep.task_id, t.target_class, rep.main_acc, rep.asr, rep.knn_acc
        )
        .map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "target,task_id,target_class,main_acc,asr,knn_acc" {
                return Err(runtime_err(format!("{}: unexpected header", path.display())));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(runtime_err(format!(
                "{}:{}: expected 6 fields, got {}",
                path.display(),
                i + 1,
                f.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| runtime_err(format!("{}:{}: {e}", path.display(), i + 1)))
        };
        rows.push(SummaryRow {
            target: parse(f[0])? as usize,
            task_id: parse(f[1])? as usize,
            target_class: parse(f[2])? as u16,
            main_acc: parse(f[3])?,
            asr: parse(f[4])?,
            knn_acc: parse(f[5])?,
        });
    }
    Ok(rows)
}

/// One CDF point in long format.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfRow {
    pub target: usize,
    /// `triggered` or `clean`.
    pub kind: String,
    pub sim: f64,
    pub fraction: f64,
}

pub fn write_cdf(dir: &Path, reports: &[EvalReport]) -> Result<PathBuf> {
    let path = dir.join(CDF_FILE);
    let mut w = create(&path)?;
    writeln!(w, "target,kind,sim,fraction").map_err(|e| io_err(&path, e))?;
    for (i, rep) in reports.iter().enumerate() {
        for (kind, cdf) in [("triggered", &rep.cdf_triggered), ("clean", &rep.cdf_clean)] {
            for &(sim, fraction) in cdf {
                writeln!(w, "{i},{kind},{sim},{fraction}").map_err(|e| io_err(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_cdf(path: &Path) -> Result<Vec<CdfRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "target,kind,sim,fraction" {
                return Err(runtime_err(format!("{}: unexpected header", path.display())));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(runtime_err(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                i + 1
            )));
        }
        let bad = |e: std::num::ParseFloatError| {
            runtime_err(format!("{}:{}: {e}", path.display(), i + 1))
        };
        rows.push(CdfRow {
            target: f[0].parse::<f64>().map_err(bad)? as usize,
            kind: f[1].to_string(),
            sim: f[2].parse().map_err(bad)?,
            fraction: f[3].parse().map_err(bad)?,
        });
    }
    Ok(rows)
}

/// Metrics of one evaluated round, reader-side.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeseriesRow {
    pub round: usize,
    pub phase: String,
    pub attack_round: bool,
    pub knn_acc: f64,
    pub asr: Vec<f64>,
    pub main_acc: Vec<f64>,
}

pub fn write_timeseries(dir: &Path, records: &[RoundRecord], n_targets: usize) -> Result<PathBuf> {
    let path = dir.join(TIMESERIES_FILE);
    let mut w = create(&path)?;
    let mut header = String::from("round,phase,attack_round,knn_acc");
    for i in 0..n_targets {
        header.push_str(&format!(",asr_{i}"));
    }
    for i in 0..n_targets {
        header.push_str(&format!(",main_{i}"));
    }
    writeln!(w, "{header}").map_err(|e| io_err(&path, e))?;
    for r in records {
        let (Some(knn), Some(asr), Some(main)) = (r.knn_acc, &r.asr, &r.main_acc) else {
            continue;
        };
        let phase = match r.phase {
            Phase::Pretrain => "pretrain",
            Phase::Attack => "attack",
        };
        let mut line = format!("{},{phase},{},{knn}", r.round, r.attack_round);
        for v in asr {
            line.push_str(&format!(",{v}"));
        }
        for v in main {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}").map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(runtime_err(format!("{}: empty file", path.display())));
    };
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..4] != ["round", "phase", "attack_round", "knn_acc"] {
        return Err(runtime_err(format!("{}: unexpected header", path.display())));
    }
    let n_targets = cols[4..].iter().filter(|c| c.starts_with("asr_")).count();
    if cols.len() != 4 + 2 * n_targets {
        return Err(runtime_err(format!("{}: inconsistent header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(runtime_err(format!(
                "{}:{}: expected {} fields",
                path.display(),
                i + 1,
                cols.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| runtime_err(format!("{}:{}: {e}", path.display(), i + 1)))
        };
        rows.push(TimeseriesRow {
            round: num(f[0])? as usize,
            phase: f[1].to_string(),
            attack_round: f[2] == "true",
            knn_acc: num(f[3])?,
            asr: f[4..4 + n_targets].iter().map(|s| num(s)).collect::<Result<_>>()?,
            main_acc: f[4 + n_targets..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| runtime_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}
