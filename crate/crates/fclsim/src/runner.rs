//! Drive one configured run end to end and write its artifacts.
//!
//! Error classification: everything that can be diagnosed before training
//! starts (config resolution, dataset assembly, experiment validation) is a
//! configuration error; failures during or after training (training itself,
//! evaluation, artifact IO) are runtime errors. The two map to distinct
//! process exit codes.

use std::fs;
use std::path::PathBuf;

use fcl_core::eval::EvalReport;
use fcl_core::federation::{final_reports, run_experiment, Experiment, RoundRecord};

use crate::assemble::assemble;
use crate::config::ResolvedConfig;
use crate::runio::{
    now_unix_ms, write_cdf, write_manifest, write_rounds, write_summary, write_timeseries,
    RunManifest, CDF_FILE, ROUNDS_FILE, SUMMARY_FILE, TIMESERIES_FILE,
};
use crate::{config_err, runtime_err, Result};

/// Everything a finished run produced, for callers that want more than
/// the files on disk.
pub struct CompletedRun {
    pub out_dir: PathBuf,
    pub experiment: Experiment,
    pub records: Vec<RoundRecord>,
    pub reports: Vec<EvalReport>,
    pub manifest: RunManifest,
}

/// Check a config end to end without training: resolve, assemble, validate.
pub fn validate_only(cfg: &ResolvedConfig) -> Result<Experiment> {
    let exp = assemble(cfg)?;
    exp.validate().map_err(config_err)?;
    Ok(exp)
}

/// Run the experiment described by `cfg` and write all artifacts into
/// `cfg.out_dir` (created if missing). Nothing is written anywhere else.
pub fn run(cfg: &ResolvedConfig) -> Result<CompletedRun> {
    let exp = validate_only(cfg)?;
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir)
        .map_err(|e| runtime_err(format!("cannot create {}: {e}", out_dir.display())))?;

    let started_unix_ms = now_unix_ms();
    let (state, records) = run_experiment(&exp).map_err(runtime_err)?;
    let reports = final_reports(&exp, &state).map_err(runtime_err)?;
    let finished_unix_ms = now_unix_ms();

    write_rounds(&out_dir, &records)?;
    write_summary(&out_dir, &reports, &exp.monitor_targets)?;
    write_cdf(&out_dir, &reports)?;
    write_timeseries(&out_dir, &records, exp.monitor_targets.len())?;
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        started_unix_ms,
        finished_unix_ms,
        files: [ROUNDS_FILE, SUMMARY_FILE, CDF_FILE, TIMESERIES_FILE]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    write_manifest(&out_dir, &manifest)?;

    Ok(CompletedRun {
        out_dir,
        experiment: exp,
        records,
        reports,
        manifest,
    })
}
