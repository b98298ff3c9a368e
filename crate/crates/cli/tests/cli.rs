use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

const BIN: &str = env!("CARGO_BIN_EXE_dhym");
const THETA_22: &str = "2.2142974355881808";

fn dhym(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("DHYM_THREADS").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

/// Reference data on a 16-point grid.
fn reference(dir: &Path) -> Value {
    json!({
        "n": 2, "N": 16, "B": [2.0, 0.0, 0.0, 2.0],
        "initial_modes": [
            {"frequency": [1, 0], "amplitude": 0.3},
            {"frequency": [1, 1], "amplitude": 0.2, "phase_shift": std::f64::consts::FRAC_PI_2}
        ],
        "scheme": "TLPF", "stop_tol": 1e-8, "t_max": 200.0, "safety": 0.8,
        "seed": 7, "record_every": 100, "output_dir": dir.join("out")
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run_config(cmd: &str, config: &Path, out: &Path) -> Output {
    dhym(&[cmd, "--config", config.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
}

#[test]
fn verify_concavity_examples() {
    let ok = dhym(&["verify-concavity", "--n", "2", "--theta-hat", THETA_22, "--samples", "10000", "--seed", "7"]);
    assert_eq!(code(&ok), 0);
    let report = stdout_json(&ok);
    assert_eq!(report["passed"], true);
    assert!(report["certification"]["worst_hessian_eig"].as_f64().unwrap() <= 1e-9);
    assert_eq!(report["certification"]["samples"], 10000);

    let below = dhym(&["verify-concavity", "--theta-hat", "1.0", "--n", "2"]);
    assert_eq!(code(&below), 2);

    let witness = dhym(&["verify-concavity", "--n", "3", "--below-branch", "1.7707963", "--expect-failure"]);
    assert_eq!(code(&witness), 0);
    let report = stdout_json(&witness);
    let w = &report["witness_searches"][0]["witness"];
    assert!(w["max_eigenvalue"].as_f64().unwrap() > 0.0);
    assert_eq!(w["spectrum"].as_array().unwrap().len(), 3);

    // Same angle given as --theta-hat is searched rather than rejected.
    let searched = dhym(&["verify-concavity", "--n", "3", "--theta-hat", "1.7707963", "--expect-failure"]);
    assert_eq!(code(&searched), 0);
}

#[test]
fn verify_concavity_failures() {
    // A top-branch angle admits no witness.
    let none = dhym(&["verify-concavity", "--n", "2", "--below-branch", THETA_22, "--budget", "2000"]);
    assert_eq!(code(&none), 1);
    assert_eq!(stdout_json(&none)["witness_searches"][0]["witness"], Value::Null);
    assert_eq!(code(&dhym(&["verify-concavity", "--n", "2"])), 2);
    assert_eq!(code(&dhym(&["verify-concavity", "--n", "0", "--theta-hat", "1.0"])), 2);
    assert_eq!(code(&dhym(&["verify-concavity", "--n", "2", "--theta-hat", THETA_22, "--samples", "0"])), 2);
    assert_eq!(code(&dhym(&["verify-concavity", "--bogus"])), 2);
}

#[test]
fn verify_concavity_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let r = dhym(&["verify-concavity", "--n", "2", "--theta-hat", THETA_22, "--samples", "500", "--output-dir", out.to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report, stdout_json(&r));
    check_manifest(&out, &["report.json", "request.json"]);
}

fn check_manifest(root: &Path, expected: &[&str]) -> Value {
    let manifest: Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_array().unwrap();
    let paths: Vec<&str> = artifacts.iter().map(|a| a["path"].as_str().unwrap()).collect();
    for e in expected {
        assert!(paths.contains(e), "{e} missing from {paths:?}");
    }
    for a in artifacts {
        let bytes = fs::read(root.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(a["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    manifest
}

#[test]
fn run_flow_reference_converges_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference(dir.path());
    cfg["snapshot_every"] = json!(1000);
    let path = write_config(dir.path(), "ref.json", &cfg);
    // No --output-dir: the config's directory is used.
    let r = dhym(&["run-flow", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let summary = stdout_json(&r);
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["violations"], json!([]));

    let out = dir.path().join("out");
    let manifest = check_manifest(
        &out,
        &[
            "trajectory.csv",
            "summary.json",
            "config.json",
            "phi_final.json",
            "phi_final.bin",
            "snapshots/phi_00000000.json",
            "snapshots/phi_00001000.bin",
        ],
    );
    assert_eq!(manifest["command"], "run-flow");
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,C,J,V,residual,theta_min,theta_max,margin,z_drift");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 9);
    // 17 significant digits.
    assert!(first.iter().all(|v| v.split('e').next().unwrap().trim_start_matches('-').len() == 18), "{first:?}");

    // Written config equals the input up to key order.
    let written: Value = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written, cfg);

    // A converged limit is a subsolution.
    let snap = out.join("phi_final.json");
    let check = dhym(&["check-subsolution", "--snapshot", snap.to_str().unwrap()]);
    assert_eq!(code(&check), 0);
    assert_eq!(stdout_json(&check)["report"]["passed"], true);
}

#[test]
fn run_flow_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "ref.json", &reference(dir.path()));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run_config("run-flow", &path, &a)), 0);
    let threaded = Command::new(BIN)
        .args(["run-flow", "--config", path.to_str().unwrap(), "--output-dir", b.to_str().unwrap()])
        .env("DHYM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&threaded), 0);
    for f in ["trajectory.csv", "summary.json", "phi_final.bin", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let bad = Command::new(BIN).args(["run-flow", "--config", path.to_str().unwrap()]).env("DHYM_THREADS", "zero").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn run_flow_domain_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    let mut cfg = reference(dir.path());
    cfg["B"] = json!([0.0, 0.0, 0.0, 0.0]);
    assert_eq!(code(&run_config("run-flow", &write_config(dir.path(), "b0.json", &cfg), &out)), 4);

    let mut cfg = reference(dir.path());
    cfg["initial_modes"] = json!([{"frequency": [1, 0], "amplitude": 3.0}]);
    let r = run_config("run-flow", &write_config(dir.path(), "uncal.json", &cfg), &out);
    assert_eq!(code(&r), 3);
    assert!(String::from_utf8_lossy(&r.stderr).contains("almost calibrated"));

    let mut cfg = reference(dir.path());
    cfg["initial_modes"].as_array_mut().unwrap().push(json!({"frequency": [5, 5], "amplitude": 1e-4}));
    cfg["safety"] = json!(20.0);
    cfg["t_max"] = json!(5.0);
    let r = run_config("run-flow", &write_config(dir.path(), "unstable.json", &cfg), &out);
    assert_eq!(code(&r), 5);
    let summary = stdout_json(&r);
    assert_eq!(summary["termination"]["kind"], "left_calibrated_range");
    assert!(summary["termination"]["suggested_dt"].as_f64().unwrap() > 0.0);

    let mut cfg = reference(dir.path());
    cfg["t_max"] = json!(1.0);
    let r = run_config("run-flow", &write_config(dir.path(), "short.json", &cfg), &out);
    assert_eq!(code(&r), 1);
    assert_eq!(stdout_json(&r)["termination"]["kind"], "time_limit");
}

#[test]
fn invalid_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut cases = Vec::new();
    for (key, value) in [
        ("safety", json!(0.0)),
        ("B", json!([2.0, 0.0, 2.0])),
        ("N", json!(15)),
        ("record_every", json!(0)),
        ("scheme", json!("EULER")),
        ("initial_modes", json!([{"frequency": [6, 0], "amplitude": 0.1}])),
    ] {
        let mut cfg = reference(dir.path());
        cfg[key] = value;
        cases.push(cfg);
    }
    let mut unknown = reference(dir.path());
    unknown["extra"] = json!(1);
    cases.push(unknown);
    for (i, cfg) in cases.iter().enumerate() {
        let path = write_config(dir.path(), &format!("bad{i}.json"), cfg);
        assert_eq!(code(&run_config("run-flow", &path, &out)), 2, "{cfg}");
    }
    assert_eq!(code(&run_config("run-flow", &dir.path().join("missing.json"), &out)), 2);
}

#[test]
fn check_subsolution_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference(dir.path());
    let r = dhym(&["check-subsolution", "--config", write_config(dir.path(), "ref.json", &cfg).to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let report = stdout_json(&r);
    let exact = 2.0f64.atan() - (THETA_22.parse::<f64>().unwrap() - std::f64::consts::FRAC_PI_2);
    let margin = report["report"]["worst_margin"].as_f64().unwrap();
    assert!(margin > 0.0 && margin < exact, "{margin}");
    assert_eq!(report["report"]["necessary_bound_holds"], true);

    // phi_0 = 0: every axis has margin atan 2 - (theta_hat - pi/2).
    let mut flat = cfg.clone();
    flat["initial_modes"] = json!([]);
    let r = dhym(&["check-subsolution", "--config", write_config(dir.path(), "flat.json", &flat).to_str().unwrap()]);
    assert_eq!(code(&r), 0);
    let margin = stdout_json(&r)["report"]["worst_margin"].as_f64().unwrap();
    assert!((margin - exact).abs() < 1e-12 && (margin - 0.4636).abs() < 1e-4, "{margin}");

    let mut zero = cfg.clone();
    zero["B"] = json!([0.0, 0.0, 0.0, 0.0]);
    let r = dhym(&["check-subsolution", "--config", write_config(dir.path(), "b0.json", &zero).to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    assert_eq!(stdout_json(&r)["passed"], false);

    // Large oscillation breaks the condition at some grid point.
    let mut wild = cfg;
    wild["initial_modes"] = json!([{"frequency": [1, 0], "amplitude": 2.3}]);
    let r = dhym(&["check-subsolution", "--config", write_config(dir.path(), "wild.json", &wild).to_str().unwrap()]);
    assert_eq!(code(&r), 1);
    let report = stdout_json(&r);
    assert!(report["report"]["worst_margin"].as_f64().unwrap() <= 0.0);
    assert_eq!(report["report"]["worst_coords"].as_array().unwrap().len(), 2);
    assert!(String::from_utf8_lossy(&r.stderr).contains("worst margin"));

    assert_eq!(code(&dhym(&["check-subsolution"])), 2);
}

#[test]
fn compare_flows_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = reference(dir.path());
    let out = dir.path().join("cmp");
    let r = run_config("compare-flows", &write_config(dir.path(), "ref.json", &cfg), &out);
    assert_eq!(code(&r), 0);
    let report = stdout_json(&r);
    assert!(report["limit_difference"].as_f64().unwrap() <= 1e-5);
    assert_eq!(report["limits_agree"], true);
    assert_eq!(report["hypercritical_initial"], true);
    assert_eq!(report["tlpf"]["summary"]["converged"], true);
    assert_eq!(report["lbmcf"]["summary"]["converged"], true);
    assert!(!report["tlpf"]["history"].as_array().unwrap().is_empty());
    check_manifest(&out, &["compare.json", "tlpf/trajectory.csv", "lbmcf/summary.json", "lbmcf/phi_final.bin"]);

    let mut flat = cfg.clone();
    flat["initial_modes"] = json!([]);
    let r = run_config("compare-flows", &write_config(dir.path(), "flat.json", &flat), &dir.path().join("flat"));
    assert_eq!(code(&r), 0);
    let report = stdout_json(&r);
    assert_eq!(report["tlpf"]["summary"]["steps"], 0);
    assert_eq!(report["lbmcf"]["summary"]["steps"], 0);
    assert_eq!(report["limit_difference"].as_f64().unwrap(), 0.0);

    // Phase spread above pi/2: still almost calibrated, outside the LBMCF
    // monotone regime. Both flows run.
    let mut wide = cfg;
    wide["initial_modes"] = json!([{"frequency": [1, 0], "amplitude": 2.3}]);
    let r = run_config("compare-flows", &write_config(dir.path(), "wide.json", &wide), &dir.path().join("wide"));
    let report = stdout_json(&r);
    assert!(report["initial_phase"]["oscillation"].as_f64().unwrap() >= std::f64::consts::FRAC_PI_2);
    assert_eq!(report["lbmcf_monotone_regime"], false);
    assert!(report["tlpf"]["summary"].is_object() && report["lbmcf"]["summary"].is_object());
    assert_eq!(code(&r), 0);
}

#[test]
fn lbmcf_run_matches_tlpf_limit() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference(dir.path());
    let tlpf = run_config("run-flow", &write_config(dir.path(), "t.json", &cfg), &dir.path().join("t"));
    cfg["scheme"] = json!("LBMCF");
    let lbmcf = run_config("run-flow", &write_config(dir.path(), "l.json", &cfg), &dir.path().join("l"));
    assert_eq!(code(&tlpf), 0);
    assert_eq!(code(&lbmcf), 0);
    let read = |d: &str| -> Vec<f64> {
        fs::read(dir.path().join(d).join("phi_final.bin"))
            .unwrap()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let (u, w) = (read("t"), read("l"));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mu, mw) = (mean(&u), mean(&w));
    let diff = u.iter().zip(&w).fold(0.0f64, |m, (a, b)| m.max(((a - mu) - (b - mw)).abs()));
    assert!(diff <= 1e-5, "{diff}");
}
