//! End-to-end checks of the command-line binary: artifact shapes,
//! seeded determinism, the simulate→reconstruct pipeline, and the
//! stable exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inline-tomo"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = bin().args(args).output().expect("binary runs");
    assert!(
        output.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_artifacts_and_is_deterministic() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"N": 2, "state": {"kind": "noon"}, "noise": {"events": 50000}, "seed": 9,
            "layout": {"kind": "symmetric", "detectors": 6}}"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(&["simulate", "--config", &config, "--out", out_a.to_str().unwrap()]);
    run_ok(&["simulate", "--config", &config, "--out", out_b.to_str().unwrap()]);

    for name in ["gamma.csv", "layout.json", "state.json"] {
        assert!(out_a.join(name).exists(), "{name} missing");
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identically seeded runs"
        );
    }

    // The config echoes match except for the output directory itself.
    let echo = |dir: &Path| -> serde_json::Value {
        let text = fs::read_to_string(dir.join("resolved_config.json")).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(echo(&out_a), echo(&out_b));

    // Two-photon coincidences over six detectors: 15 channels plus a
    // header.
    let gamma = fs::read_to_string(out_a.join("gamma.csv")).unwrap();
    assert_eq!(gamma.lines().count(), 16);
    assert!(gamma.starts_with("p,combo,count"));

    // A different seed must change the sampled counts.
    let out_c = dir.path().join("c");
    run_ok(&["simulate", "--config", &config, "--seed", "10", "--out", out_c.to_str().unwrap()]);
    assert_ne!(
        fs::read(out_a.join("gamma.csv")).unwrap(),
        fs::read(out_c.join("gamma.csv")).unwrap()
    );
}

#[test]
fn simulate_reconstruct_round_trip_recovers_the_state() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"N": 2, "state": {"kind": "noon"}, "noise": {"events": 1000000}, "seed": 3,
            "layout": {"kind": "symmetric", "detectors": 8}}"#,
    );
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    run_ok(&["simulate", "--config", &config, "--out", out_s]);

    let gamma = out.join("gamma.csv");
    let truth = out.join("state.json");
    let output = run_ok(&[
        "reconstruct",
        gamma.to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "--config",
        &config,
        "--out",
        out_s,
    ]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("fidelity"), "missing fidelity line: {stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("reconstruction.json")).unwrap())
            .unwrap();
    let fidelity = report["fidelity"].as_f64().unwrap();
    assert!(fidelity >= 0.999, "round-trip fidelity {fidelity}");
    assert!(report["converged"].as_bool().unwrap());
    assert!(report["positive"].as_bool().unwrap());
    assert_eq!(report["N"].as_u64().unwrap(), 2);
}

#[test]
fn resonant_layout_exits_with_code_four() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"coupler": {"C": 1.0, "beta": 0.0}}"#);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    run_ok(&["simulate", "--config", &config, "--out", out_s]);

    let gamma = out.join("gamma.csv");
    let output = bin()
        .args(["reconstruct", gamma.to_str().unwrap(), "--config", &config, "--out", out_s])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("ill-conditioned"), "stderr: {stderr}");
}

#[test]
fn malformed_inputs_exit_with_code_two() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();

    // Counts file that is not a correlation CSV.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "not,a,table\n1,2\n").unwrap();
    let output =
        bin().args(["reconstruct", bad.to_str().unwrap(), "--out", out_s]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Config that is not valid JSON.
    let broken = write_config(dir.path(), "{nope");
    let output = bin().args(["simulate", "--config", &broken, "--out", out_s]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // Config with an unknown field.
    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"detectors": 6}"#).unwrap();
    let output = bin()
        .args(["simulate", "--config", unknown.to_str().unwrap(), "--out", out_s])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn beta_sweep_peaks_near_the_design_ratio() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    run_ok(&["sweep", "beta", "--min", "0", "--max", "2", "--step", "0.02", "--out", out_s]);

    let text = fs::read_to_string(out.join("sweep_beta.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "beta_over_c,kappa_inv,sigma_min,sigma_max");
    let best = lines
        .map(|l| {
            let mut cells = l.split(',');
            let x: f64 = cells.next().unwrap().parse().unwrap();
            let k: f64 = cells.next().unwrap().parse().unwrap();
            (x, k)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert!((0.6..=0.85).contains(&best.0), "peak at beta/C = {}", best.0);
}

#[test]
fn fluorescence_synthetic_emits_one_row_per_window() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let output = run_ok(&["fluorescence", "--synthetic", "--out", out_s]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("34 windows"), "stdout: {stdout}");
    assert!(stdout.contains("mean fidelity"), "stdout: {stdout}");

    let trajectory = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 35, "header plus one row per window");
    assert!(trajectory.starts_with("z0_mm,sx,sy,sz,fidelity"));

    let windows: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("windows.json")).unwrap()).unwrap();
    assert_eq!(windows.as_array().unwrap().len(), 34);
    assert!(out.join("trace.csv").exists(), "synthetic trace is echoed");

    // The synthesized trace can be fed back in as a measured file.
    let replay = dir.path().join("replay");
    let trace = out.join("trace.csv");
    let output =
        run_ok(&["fluorescence", trace.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("34 windows"), "stdout: {stdout}");
    assert!(replay.join("trajectory.csv").exists());
}

#[test]
fn short_trace_exits_with_code_two_and_names_the_required_length() {
    let dir = tempdir().unwrap();
    let trace = dir.path().join("short.csv");
    fs::write(&trace, "z_mm,p1,p2\n0.0,1.0,0.0\n10.0,0.6,0.4\n20.0,0.2,0.8\n").unwrap();
    let out = dir.path().join("run");
    let output = bin()
        .args(["fluorescence", trace.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("68.52"), "required length missing from: {stderr}");
}

#[test]
fn optimize_reports_are_valid_json() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    let config = write_config(dir.path(), r#"{"N": 2}"#);

    run_ok(&["optimize", "dz", "--config", &config, "--out", out_s]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dz_optimum.json")).unwrap()).unwrap();
    assert_eq!(report["m"].as_u64().unwrap(), 5);
    assert!(report["kappa_inv"].as_f64().unwrap() > 1e-3);

    run_ok(&["optimize", "free", "--restarts", "6", "--out", out_s]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("free_optimum.json")).unwrap()).unwrap();
    let kappa = report["kappa_inv"].as_f64().unwrap();
    assert!((kappa - 1.0 / 3f64.sqrt()).abs() < 1e-6, "free search found {kappa}");
}
