//! End-to-end tests of the `ksflow` binary: exit codes, artifact layout,
//! byte-level determinism of reruns, environment overrides, and the
//! analyze/compare/sweep subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A command for the compiled binary with all ambient `KSFLOW_*` variables
/// removed, so the host environment cannot leak into test configurations.
fn ksflow() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ksflow"));
    for (key, _) in std::env::vars() {
        if key.starts_with("KSFLOW_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn output_of(cmd: &mut Command) -> Output {
    cmd.output().expect("binary spawns")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn assert_exit(out: &Output, code: i32) -> String {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const BASIC_CONFIG: &str = r#"
[grid]
dim = 1
n = 32
length = 16.0

[potential]
lambda = 0.5
alpha = 0.5
mu = 0.0
beta = 1.0

[frame]
kind = "fixed"
start = 1.0
end = 1.5

[time]
policy = "fixed"
dt = 0.05

[initial]
rank = 1
seed = 3
epsilon0 = 0.2
sobolev_m = 1.0

[diagnostics]
samples = 4

[output]
checkpoint_every = 2
"#;

/// Compactified run with scattering analysis enabled; small enough to
/// finish in well under a second.
const SCATTER_CONFIG: &str = r#"
[grid]
dim = 1
n = 64
length = 24.0

[potential]
lambda = 0.0
alpha = 0.5
mu = 3.0
beta = 1.0

[frame]
kind = "compact-critical"
start = 1.0
end = 0.04

[time]
policy = "fixed"
dt = 0.002

[initial]
rank = 1
seed = 5
epsilon0 = 0.8
sobolev_m = 1.0

[diagnostics]
samples = 25
scattering = true

[output]
checkpoint_every = 4
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).expect("config written");
    path
}

fn run_into(config: &Path, out: &Path) -> String {
    assert_ok(&output_of(
        ksflow().args(["run", "--config"]).arg(config).arg("--out").arg(out),
    ))
}

fn read_bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn run_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", BASIC_CONFIG);
    let out = dir.path().join("out");
    let stdout = run_into(&config, &out);
    assert!(stdout.contains("run complete"), "stdout: {stdout}");
    for artifact in [
        "manifest.toml",
        "diagnostics.csv",
        "fits.csv",
        "snapshots/state_final.snap",
        "snapshots/state_00000.snap",
    ] {
        assert!(out.join(artifact).is_file(), "missing {artifact}");
    }
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("[config.grid]"), "manifest echoes config");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", BASIC_CONFIG);
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&config, &out_a);
    run_into(&config, &out_b);
    for artifact in ["manifest.toml", "diagnostics.csv", "fits.csv", "snapshots/state_final.snap"] {
        assert_eq!(
            read_bytes(&out_a.join(artifact)),
            read_bytes(&out_b.join(artifact)),
            "{artifact} differs between identical reruns"
        );
    }
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", BASIC_CONFIG);
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&config, &out_a);
    run_into(&out_a.join("manifest.toml"), &out_b);
    assert_eq!(
        read_bytes(&out_a.join("diagnostics.csv")),
        read_bytes(&out_b.join("diagnostics.csv")),
        "rerun from manifest is not byte-identical"
    );
    assert_eq!(
        read_bytes(&out_a.join("snapshots/state_final.snap")),
        read_bytes(&out_b.join("snapshots/state_final.snap")),
    );
}

#[test]
fn seed_flag_changes_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", BASIC_CONFIG);
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&output_of(
        ksflow().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_a).args(["--seed", "3"]),
    ));
    assert_ok(&output_of(
        ksflow().args(["run", "--config"]).arg(&config).arg("--out").arg(&out_b).args(["--seed", "4"]),
    ));
    assert_ne!(
        read_bytes(&out_a.join("diagnostics.csv")),
        read_bytes(&out_b.join("diagnostics.csv")),
        "different seeds must produce different data"
    );
    let manifest_b = fs::read_to_string(out_b.join("manifest.toml")).unwrap();
    assert!(manifest_b.contains("seed = 4"), "manifest echoes the seed override");
}

#[test]
fn env_overrides_apply_to_configs_and_presets() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", BASIC_CONFIG);
    let out = dir.path().join("env");
    assert_ok(&output_of(
        ksflow()
            .args(["run", "--config"]).arg(&config).arg("--out").arg(&out)
            .env("KSFLOW_GRID_N", "64"),
    ));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("n = 64"), "override missing from manifest:\n{manifest}");

    let out = dir.path().join("preset");
    assert_ok(&output_of(
        ksflow()
            .args(["run", "--preset", "free", "--out"]).arg(&out)
            .env("KSFLOW_GRID_N", "32")
            .env("KSFLOW_TIME_DT", "0.05")
            .env("KSFLOW_DIAGNOSTICS_SAMPLES", "7"),
    ));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("n = 32"), "preset override missing:\n{manifest}");
}

#[test]
fn free_preset_conserves_mass_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("free");
    // Shrink the preset so the test stays fast; free evolution conserves
    // density norms at any resolution.
    assert_ok(&output_of(
        ksflow()
            .args(["run", "--preset", "free", "--out"]).arg(&out)
            .env("KSFLOW_GRID_N", "32")
            .env("KSFLOW_TIME_DT", "0.05")
            .env("KSFLOW_DIAGNOSTICS_SAMPLES", "7"),
    ));
    let csv = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mass_col = header.iter().position(|&c| c == "rho_l1").unwrap();
    let masses: Vec<f64> = lines
        .map(|l| l.split(',').nth(mass_col).unwrap().parse().unwrap())
        .collect();
    assert_eq!(masses.len(), 7);
    let m0 = masses[0];
    for m in &masses {
        assert!((m - m0).abs() / m0 < 1e-10, "mass drifted: {m0} -> {m}");
    }
}

#[test]
fn unknown_config_key_fails_with_key_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bad.toml",
        "[grid]\ndim = 1\nn = 32\nlength = 16.0\ntypo_key = 1\n",
    );
    let out = output_of(ksflow().args(["run", "--config"]).arg(&config));
    let stderr = assert_exit(&out, 2);
    assert!(stderr.contains("grid.typo_key"), "stderr: {stderr}");
    assert!(stderr.contains("unknown field"), "stderr: {stderr}");
}

#[test]
fn unknown_preset_fails() {
    let out = output_of(ksflow().args(["run", "--preset", "bogus"]));
    let stderr = assert_exit(&out, 2);
    assert!(stderr.contains("critical2d"), "should list presets: {stderr}");
}

#[test]
fn run_without_source_fails() {
    let out = output_of(ksflow().arg("run"));
    let stderr = assert_exit(&out, 2);
    assert!(stderr.contains("--config"), "stderr: {stderr}");
}

#[test]
fn conflicting_source_flags_fail() {
    let out = output_of(ksflow().args(["run", "--config", "x.toml", "--preset", "free"]));
    assert_exit(&out, 2);
}

#[test]
fn numeric_abort_exits_3_and_keeps_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "abort.toml",
        &SCATTER_CONFIG.replace("mu = 3.0", "mu = 50000.0"),
    );
    let out = dir.path().join("out");
    let result = output_of(ksflow().args(["run", "--config"]).arg(&config).arg("--out").arg(&out));
    let stderr = assert_exit(&result, 3);
    assert!(stderr.contains("stability"), "stderr: {stderr}");
    assert!(out.join("snapshots/last_good.snap").is_file());
    assert!(out.join("diagnostics.csv").is_file(), "partial series is flushed");
}

#[test]
fn analyze_writes_reports_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "scatter.toml", SCATTER_CONFIG);
    let out = dir.path().join("out");
    run_into(&config, &out);
    let stdout = assert_ok(&output_of(ksflow().arg("analyze").arg(&out)));
    assert!(stdout.contains("analysis written"), "stdout: {stdout}");
    let analysis = out.join("analysis");
    for artifact in [
        "report.csv",
        "decay.svg",
        "decay_rho_linf.dat",
        "cauchy_unmodified.csv",
        "cauchy_modified.csv",
    ] {
        assert!(analysis.join(artifact).is_file(), "missing analysis/{artifact}");
    }
    // Recomputed fits must agree byte-for-byte with the in-run report.
    assert_eq!(
        read_bytes(&analysis.join("report.csv")),
        read_bytes(&out.join("fits.csv")),
        "analyze must reproduce the stored fit report"
    );
    let first = read_bytes(&analysis.join("report.csv"));
    assert_ok(&output_of(ksflow().arg("analyze").arg(&out)));
    assert_eq!(first, read_bytes(&analysis.join("report.csv")), "analyze is idempotent");
}

#[test]
fn analyze_rejects_corrupt_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "scatter.toml", SCATTER_CONFIG);
    let out = dir.path().join("out");
    run_into(&config, &out);
    let victim = out.join("snapshots/state_00000.snap");
    let mut bytes = read_bytes(&victim);
    bytes[..8].copy_from_slice(b"GARBAGE!");
    fs::write(&victim, bytes).unwrap();
    let result = output_of(ksflow().arg("analyze").arg(&out));
    let stderr = assert_exit(&result, 1);
    assert!(stderr.contains("snapshot"), "stderr: {stderr}");
    assert!(stderr.contains("magic"), "stderr: {stderr}");
}

#[test]
fn compare_reports_differences() {
    let dir = tempfile::tempdir().unwrap();
    let config_a = write_config(dir.path(), "a.toml", BASIC_CONFIG);
    let config_b = write_config(dir.path(), "b.toml", &BASIC_CONFIG.replace("dt = 0.05", "dt = 0.025"));
    let (out_a, out_b) = (dir.path().join("a"), dir.path().join("b"));
    run_into(&config_a, &out_a);
    run_into(&config_b, &out_b);
    let cmp = dir.path().join("cmp");
    let stdout = assert_ok(&output_of(
        ksflow().arg("compare").arg(&out_a).arg(&out_b).arg("--out").arg(&cmp),
    ));
    assert!(stdout.contains("time.dt"), "stdout: {stdout}");
    let report = fs::read_to_string(cmp.join("compare.csv")).unwrap();
    assert!(report.contains("time.dt"), "report: {report}");
}

#[test]
fn sweep_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sweep.toml",
        &format!("{BASIC_CONFIG}\n[sweep]\ndt = [0.05, 0.025]\n"),
    );
    let out = dir.path().join("sweep");
    let stdout = assert_ok(&output_of(
        ksflow().args(["sweep", "--config"]).arg(&config).arg("--out").arg(&out),
    ));
    assert!(stdout.contains("sweep complete: 2 points (2 ok, 0 failed)"), "stdout: {stdout}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3, "header plus one row per point");
    assert!(out.join("point_0000/diagnostics.csv").is_file());
    assert!(out.join("point_0001/diagnostics.csv").is_file());
}
