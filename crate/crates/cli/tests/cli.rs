//! End-to-end checks of the spinsim binary: artifact layout, reproducibility,
//! strict config rejection, and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinsim() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spinsim"));
    // isolate from the invoking shell
    for var in ["SPINSIM_CONFIG", "SPINSIM_OUT", "SPINSIM_SEED", "SPINSIM_WORKERS"] {
        cmd.env_remove(var);
    }
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    out
}

fn run_err(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("binary runs");
    assert!(!out.status.success(), "expected failure, command succeeded");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("reading {name} from {}: {e}", dir.display()))
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

/// Manifest text with the timestamp line removed, for rerun comparison.
fn manifest_identity(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("timestamp_unix_s"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn rabi_artifacts_are_reproducible_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"rabi\"\n");
    let dir1 = tmp.path().join("run1");
    let dir2 = tmp.path().join("run2");

    let out = run_ok(spinsim().args(["rabi", "--config"]).arg(&cfg).arg("--out").arg(&dir1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("artifact"), "summary line missing: {stdout}");

    let csv = read(&dir1, "rabi.csv");
    assert!(csv.starts_with("duration_s,p_f2\n"), "header: {}", csv.lines().next().unwrap());
    let manifest1 = read(&dir1, "manifest.txt");
    assert!(manifest1.contains("config_sha256 = "), "{manifest1}");
    assert!(manifest1.contains("fits_converged = true"), "{manifest1}");
    assert!(manifest1.contains("output = rabi.csv"), "{manifest1}");
    let fit = read(&dir1, "rabi_fit.txt");
    assert!(fit.contains("converged = true"), "{fit}");

    run_ok(spinsim().args(["rabi", "--config"]).arg(&cfg).arg("--out").arg(&dir2));
    assert_eq!(read(&dir1, "rabi.csv"), read(&dir2, "rabi.csv"), "data files must be byte-identical");
    assert_eq!(read(&dir1, "rabi.svg"), read(&dir2, "rabi.svg"));
    assert_eq!(
        manifest_identity(&manifest1),
        manifest_identity(&read(&dir2, "manifest.txt")),
        "manifests may differ only in the timestamp"
    );
}

#[test]
fn ramsey_scan_fits_a_fast_fringe() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"ramsey_scan\"\n\
         [sequence]\n\
         interrogation_s = 2e-4\n\
         [scan]\n\
         detuning_span_hz = 3e3\n\
         points = 12\n",
    );
    let dir = tmp.path().join("out");
    run_ok(spinsim().args(["ramsey", "--config"]).arg(&cfg).arg("--out").arg(&dir));

    let csv = read(&dir, "fringe.csv");
    assert_eq!(csv.lines().count(), 13, "header plus one line per scan point");
    assert!(csv.starts_with("detuning_hz,p_f2\n"));

    let svg = read(&dir, "fringe.svg");
    assert_eq!(svg.matches("<circle").count(), 12, "one marker per scan point");

    let fit = read(&dir, "fringe_fit.txt");
    assert!(fit.contains("[fringe_fit]"), "{fit}");
    assert!(fit.contains("converged = true"), "{fit}");
    // constant schedule: no reversal, so no baseline comparison artifacts
    assert!(!dir.join("fringe_baseline.csv").exists());
}

#[test]
fn reversal_run_reports_the_pi_class() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    run_ok(spinsim().args(["reverse", "--out"]).arg(&dir));

    let report = read(&dir, "reversal.txt");
    assert!(report.contains("two_f = 2"), "{report}");
    assert!(report.contains("class = pi"), "{report}");
    let trajectory = read(&dir, "trajectory.csv");
    assert!(trajectory.starts_with("t_s,re_c0,im_c0"), "{}", trajectory.lines().next().unwrap());
    assert!(trajectory.lines().count() > 10, "trajectory should carry many samples");
}

#[test]
fn adiabaticity_report_names_the_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    run_ok(spinsim().args(["adiabaticity", "--out"]).arg(&dir));

    let report = read(&dir, "adiabaticity.txt");
    assert!(report.contains("regime = adiabatic"), "{report}");
    let csv = read(&dir, "gap.csv");
    assert_eq!(csv.lines().count(), 502, "header plus 501 gap samples");
}

#[test]
fn unknown_config_key_fails_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"rabi\"\nrabbit_hz = 1.0\n");
    let (code, stderr) = run_err(spinsim().args(["rabi", "--config"]).arg(&cfg));
    assert_eq!(code, 1);
    assert!(stderr.contains("rabbit_hz"), "stderr should name the bad key: {stderr}");
}

#[test]
fn duplicate_config_key_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"rabi\"\nseed = 1\nseed = 2\n");
    let (code, stderr) = run_err(spinsim().args(["rabi", "--config"]).arg(&cfg));
    assert_eq!(code, 1);
    assert!(stderr.contains("seed") || stderr.contains("duplicate"), "{stderr}");
}

#[test]
fn invalid_field_floor_names_the_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kind = \"reversal_phase\"\n\
         [schedule]\n\
         kind = \"smooth_reversal\"\n\
         b_min_g = -0.1\n",
    );
    let (code, stderr) = run_err(spinsim().args(["reverse", "--config"]).arg(&cfg));
    assert_eq!(code, 1);
    assert!(stderr.contains("b_min"), "stderr should point at the field floor: {stderr}");
}

#[test]
fn config_kind_must_match_the_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "kind = \"rabi\"\n");
    let (code, stderr) = run_err(spinsim().args(["ramsey", "--config"]).arg(&cfg));
    assert_eq!(code, 1);
    assert!(stderr.contains("does not match"), "{stderr}");
}

#[test]
fn missing_config_file_fails_with_the_path() {
    let (code, stderr) = run_err(spinsim().args(["rabi", "--config", "/nonexistent/nope.toml"]));
    assert_eq!(code, 1);
    assert!(stderr.contains("nope.toml"), "{stderr}");
}

#[test]
fn environment_variables_stand_in_for_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("from_env");
    run_ok(spinsim().arg("adiabaticity").env("SPINSIM_OUT", &dir));
    assert!(dir.join("manifest.txt").exists(), "SPINSIM_OUT was not honored");
}
