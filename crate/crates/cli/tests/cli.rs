use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dp"))
        .args(args)
        .current_dir(dir)
        .env_remove("DP_OUTPUT_DIR")
        .output()
        .expect("dp runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn validate_reports_bad_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"grid": {"length": 60, "n": 1000}}"#);
    let out = dp(&["validate", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.n = 1000"));

    let out = dp(&["validate"], tmp.path());
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

#[test]
fn unreadable_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "junk.json", r#"{"scenario": "warp_drive"}"#);
    assert_eq!(dp(&["simulate", "-c", &cfg], tmp.path()).status.code(), Some(2));
    assert_eq!(dp(&["simulate", "-c", "missing.json"], tmp.path()).status.code(), Some(2));
    let sweep = write(tmp.path(), "s.json", r#"{"scenario": "sweep"}"#);
    assert_eq!(dp(&["simulate", "-c", &sweep], tmp.path()).status.code(), Some(2));
}

#[test]
fn simulate_writes_manifest_with_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "train.json",
        r#"{"scenario": "train", "time": {"T": 4.0},
            "profile": {"velocities": [1, 2], "separation": 30},
            "output_dir": "ignored"}"#,
    );
    let out = dp(&["simulate", "-c", &cfg, "-o", "run"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rollup"], true);
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "series.csv"));
    for f in files {
        let bytes = fs::read(tmp.path().join("run").join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "p.json", r#"{"time": {"T": 1.0}}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_dp"))
        .args(["simulate", "-c", &cfg])
        .current_dir(tmp.path())
        .env("DP_OUTPUT_DIR", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from_env/manifest.json").exists());
}

#[test]
fn failing_check_gives_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    // an impossible conservation tolerance
    let cfg = write(
        tmp.path(),
        "strict.json",
        r#"{"backend": "spectral", "grid": {"length": 40, "n": 1024}, "time": {"T": 0.5},
            "profile": {"mollification": 8}, "diagnostics": {"conservation_tol": -1}}"#,
    );
    let out = dp(&["simulate", "-c", &cfg, "-o", "strict"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL conservation_M"));
}

#[test]
fn identities_and_sweep_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "id.json",
        r#"{"grid": {"length": 40, "n": 4096}, "identities": {"samples": 5, "resolvent_fields": 3}}"#,
    );
    let out = dp(&["identities", "-c", &cfg, "-o", "id"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(tmp.path().join("id/identities.csv")).unwrap();
    assert!(csv.lines().count() > 5 * 6);

    let cfg = write(
        tmp.path(),
        "sw.json",
        r#"{"scenario": "sweep", "time": {"T": 2.0},
            "profile": {"velocities": [1, 2]},
            "sweep": {"base": "train", "parameter": "separation", "values": [20, 25, 30]}}"#,
    );
    let out = dp(&["sweep", "-c", &cfg, "-o", "sw", "--jobs", "3"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = fs::read_to_string(tmp.path().join("sw/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(tmp.path().join("sw/run_002/manifest.json").exists());
}

#[test]
fn reference_examples_roll_up_true() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "id7.json", r#"{"scenario": "identities", "seed": 7}"#);
    let out = dp(&["identities", "-c", &cfg, "-o", "id7"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));

    let cfg = write(
        tmp.path(),
        "peakon.json",
        r#"{"scenario": "single_peakon", "time": {"T": 20.0},
            "profile": {"c": 1.0, "delta": 1e-3,
                        "perturbations": [{"shape": "bump", "amplitude": 0.1, "center": 4, "width": 1}]}}"#,
    );
    let out = dp(&["simulate", "-c", &cfg, "-o", "peakon"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = fs::read_to_string(tmp.path().join("peakon/summary.csv")).unwrap();
    assert!(summary.contains("stability_envelope_pass,true"));
}
