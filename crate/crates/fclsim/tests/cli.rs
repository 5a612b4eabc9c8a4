//! End-to-end checks of the `fclsim` binary: exit codes, artifact
//! placement, seed overrides, and `FCLSIM_THREADS` handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fclsim::presets::PRESET_NAMES;
use fclsim::runio::{read_manifest, MANIFEST_FILE};

fn fclsim() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fclsim"));
    cmd.env_remove("FCLSIM_THREADS");
    cmd
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A config small enough that a full run finishes in about a second.
fn write_tiny_config(path: &Path) {
    let text = "\
federation.n_clients = 4
federation.clients_per_round = 3
federation.rounds = 2
federation.pretrain_rounds = 2
federation.n_attackers = 1
federation.eval_every = 2
attack.mode = centralized
attack.targets = 1
attack.refs = 2
attack.epochs = 2
data.n_classes = 3
data.per_class = 12
data.height = 8
data.width = 8
contrastive.epochs = 1
contrastive.batch = 4
attack.batch = 4
eval.probe_iters = 40
eval.knn_k = 8
";
    fs::write(path, text).unwrap();
}

#[test]
fn presets_subcommand_lists_every_scenario() {
    let out = fclsim().arg("presets").output().unwrap();
    assert!(out.status.success());
    let listing = stdout(&out);
    let names: Vec<&str> = listing.lines().map(str::trim).collect();
    assert_eq!(names, PRESET_NAMES.to_vec());
}

#[test]
fn run_without_config_or_preset_exits_2() {
    let out = fclsim().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error:"), "{}", stderr(&out));
}

#[test]
fn unknown_preset_exits_2() {
    let out = fclsim()
        .args(["validate", "--preset", "does_not_exist"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown preset"), "{}", stderr(&out));
}

#[test]
fn missing_config_file_exits_2() {
    let out = fclsim().args(["run", "/no/such/file.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("cannot read"), "{}", stderr(&out));
}

#[test]
fn validate_reports_a_hash_stable_under_key_reordering() {
    let dir = tempfile::tempdir().unwrap();
    let fwd = dir.path().join("fwd.cfg");
    let rev = dir.path().join("rev.cfg");
    fs::write(&fwd, "seed = 9\nfederation.rounds = 3\ncontrastive.lr = 0.05\n").unwrap();
    fs::write(&rev, "contrastive.lr = 0.05\nfederation.rounds = 3\nseed = 9\n").unwrap();

    let a = fclsim().arg("validate").arg(&fwd).output().unwrap();
    let b = fclsim().arg("validate").arg(&rev).output().unwrap();
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(stdout(&a).contains("config ok"), "{}", stdout(&a));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn validate_rejects_unknown_keys_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "federation.warp_factor = 9\n").unwrap();
    let out = fclsim().arg("validate").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("federation.warp_factor"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn run_writes_artifacts_and_honors_cli_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    write_tiny_config(&cfg);
    let out_dir = dir.path().join("artifacts");

    let out = fclsim()
        .arg("run")
        .arg(&cfg)
        .args(["--seed", "7", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("run complete"), "{text}");
    assert!(text.contains("seed 7"), "{text}");
    assert!(text.contains("target 0"), "{text}");

    let manifest = read_manifest(&out_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.seed, 7);
    for file in &manifest.files {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }
}

#[test]
fn blocked_out_dir_is_a_runtime_error_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    write_tiny_config(&cfg);
    // A plain file where the out dir should go.
    let blocker = dir.path().join("occupied");
    fs::write(&blocker, "not a directory").unwrap();

    let out = fclsim()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&blocker)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn invalid_threads_env_exits_2() {
    for bad in ["abc", "0", "-1"] {
        let out = fclsim()
            .args(["validate", "--preset", "baseline_noattack"])
            .env("FCLSIM_THREADS", bad)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "FCLSIM_THREADS={bad}");
        assert!(stderr(&out).contains("FCLSIM_THREADS"), "{}", stderr(&out));
    }
}

#[test]
fn thread_cap_env_is_accepted_on_a_real_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    write_tiny_config(&cfg);
    let out_dir = dir.path().join("run");
    let out = fclsim()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("FCLSIM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out_dir.join(MANIFEST_FILE).is_file());
}
