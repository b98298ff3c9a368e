use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Result};
use dhym::concavity::{certify_concavity, find_nonconcavity, ConcavityReport, NonConcavityWitness};
use dhym::flow::{
    build_potential, run_flow_observed, write_summary_json, write_trajectory_csv, RunOutcome, RunSummary, Scheme,
    Termination,
};
use dhym::phase::BranchedAngle;
use dhym::torus::{
    compute_Z, eigen_field, matrix_field, read_snapshot, write_snapshot, ScalarField, TorusConfig, ZInvariant,
};
use dhym::flow::{check_subsolution_field, SubsolutionFieldReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{sha256_json, OutputDir};
use crate::{
    ConfigArgs, SubsolutionArgs, VerifyArgs, EXIT_BRANCH, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_LEFT_RANGE,
    EXIT_NOT_CALIBRATED, EXIT_OK,
};

/// Limits closer than this after mean matching count as the same metric.
const LIMIT_AGREEMENT: f64 = 1e-5;

pub fn exit_code_of(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<dhym::Error>() {
        Some(dhym::Error::NotAlmostCalibrated { .. }) => EXIT_NOT_CALIBRATED,
        Some(dhym::Error::BranchUnavailable { .. } | dhym::Error::ZeroInvariant { .. } | dhym::Error::InvalidBranch { .. }) => {
            EXIT_BRANCH
        }
        Some(dhym::Error::LeftCalibratedRange { .. }) => EXIT_LEFT_RANGE,
        _ => EXIT_INVALID,
    }
}

/// Pretty JSON on stdout; a closed pipe is not an error.
fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

#[derive(Serialize)]
struct WitnessSearch {
    theta_hat: f64,
    budget: usize,
    seed: u64,
    witness: Option<NonConcavityWitness>,
}

#[derive(Serialize)]
struct VerifyReport {
    command: &'static str,
    n: usize,
    certification: Option<ConcavityReport>,
    witness_searches: Vec<WitnessSearch>,
    passed: bool,
}

#[derive(Serialize)]
struct VerifyRequest {
    n: usize,
    theta_hat: Option<f64>,
    samples: usize,
    seed: u64,
    below_branch: Option<f64>,
    expect_failure: bool,
    budget: usize,
}

pub fn verify_concavity(a: &VerifyArgs) -> Result<u8> {
    if a.n == 0 {
        eprintln!("error: --n must be >= 1");
        return Ok(EXIT_INVALID);
    }
    if a.theta_hat.is_none() && a.below_branch.is_none() {
        eprintln!("error: give --theta-hat, --below-branch, or both");
        return Ok(EXIT_INVALID);
    }
    let mut certification = None;
    let mut targets = Vec::new();
    if let Some(th) = a.theta_hat {
        match BranchedAngle::top_branch(a.n, th) {
            Ok(_) => certification = Some(certify_concavity(a.n, th, a.samples, a.seed)?),
            Err(_) if a.expect_failure => targets.push(th),
            Err(e) => {
                eprintln!("error: {e}; pass --expect-failure to search it for a witness");
                return Ok(EXIT_INVALID);
            }
        }
    }
    targets.extend(a.below_branch);
    let witness_searches: Vec<WitnessSearch> = targets
        .into_iter()
        .map(|theta_hat| WitnessSearch {
            theta_hat,
            budget: a.budget,
            seed: a.seed,
            witness: find_nonconcavity(a.n, theta_hat, a.budget, a.seed),
        })
        .collect();
    let passed = certification.as_ref().is_none_or(|c| c.passed) && witness_searches.iter().all(|w| w.witness.is_some());
    let report = VerifyReport {
        command: "verify-concavity",
        n: a.n,
        certification,
        witness_searches,
        passed,
    };
    print_json(&report)?;
    if let Some(dir) = &a.output_dir {
        let request = VerifyRequest {
            n: a.n,
            theta_hat: a.theta_hat,
            samples: a.samples,
            seed: a.seed,
            below_branch: a.below_branch,
            expect_failure: a.expect_failure,
            budget: a.budget,
        };
        let mut out = OutputDir::create(dir)?;
        out.write_json("request.json", &request)?;
        out.write_json("report.json", &report)?;
        out.finish("verify-concavity", &sha256_json(&request))?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

struct Prepared {
    cfg: RunConfig,
    torus: TorusConfig,
    phi0: ScalarField,
}

fn prepare(path: &Path) -> Result<Prepared> {
    let cfg = RunConfig::load(path)?;
    let torus = cfg.torus()?;
    let phi0 = build_potential(&torus, &cfg.modes())?;
    Ok(Prepared { cfg, torus, phi0 })
}

/// Runs one scheme, writing its CSV, summary, snapshots and final field under
/// `prefix` inside `out`.
fn execute(p: &Prepared, th: &BranchedAngle, scheme: Scheme, out: &mut OutputDir, prefix: &str) -> Result<RunOutcome> {
    let opts = p.cfg.options(scheme);
    let mut snapshot_error = None;
    let mut snapshots = Vec::new();
    let every = p.cfg.snapshot_every;
    let outcome = run_flow_observed(&p.torus, &p.phi0, th, &opts, |state| {
        let Some(every) = every else { return };
        if !state.step.is_multiple_of(every) || snapshot_error.is_some() {
            return;
        }
        let stem = out.path(&format!("{prefix}snapshots/phi_{:08}", state.step));
        let written = stem
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .map_err(dhym::Error::from)
            .and_then(|_| write_snapshot(&stem, &p.torus, &state.phi, state.t));
        match written {
            Ok((json, bin)) => snapshots.extend([json, bin]),
            Err(e) => snapshot_error = Some(e),
        }
    })?;
    if let Some(e) = snapshot_error {
        return Err(e.into());
    }
    for path in snapshots {
        out.record(path);
    }
    let mut csv = Vec::new();
    write_trajectory_csv(&mut csv, &outcome.trajectory)?;
    out.write(&format!("{prefix}trajectory.csv"), &csv)?;
    let mut json = Vec::new();
    write_summary_json(&mut json, &outcome.summary)?;
    out.write(&format!("{prefix}summary.json"), &json)?;
    let (json, bin) = write_snapshot(
        &out.path(&format!("{prefix}phi_final")),
        &p.torus,
        &outcome.final_state.phi,
        outcome.final_state.t,
    )?;
    out.record(json);
    out.record(bin);
    Ok(outcome)
}

fn summary_exit_code(s: &RunSummary) -> u8 {
    match s.termination {
        Termination::LeftCalibratedRange { .. } => EXIT_LEFT_RANGE,
        _ if s.converged && s.violations.is_empty() => EXIT_OK,
        _ => EXIT_CHECK_FAILED,
    }
}

pub fn run_flow(a: &ConfigArgs) -> Result<u8> {
    let p = prepare(&a.config)?;
    let zi = compute_Z(&p.torus, &p.phi0, p.cfg.branch())?;
    let root = a.output_dir.clone().unwrap_or_else(|| p.cfg.output_dir.clone());
    let mut out = OutputDir::create(&root)?;
    let outcome = execute(&p, &zi.theta_hat, p.cfg.scheme, &mut out, "")?;
    out.write_json("config.json", &p.cfg)?;
    out.finish("run-flow", &p.cfg.digest())?;
    print_json(&outcome.summary)?;
    Ok(summary_exit_code(&outcome.summary))
}

#[derive(Serialize)]
struct SubsolutionOutput {
    command: &'static str,
    source: String,
    n: usize,
    grid: usize,
    branch: i64,
    theta_hat: Option<f64>,
    /// Set when no top-branch angle exists for this data.
    reason: Option<String>,
    report: Option<SubsolutionFieldReport>,
    passed: bool,
}

pub fn check_subsolution(a: &SubsolutionArgs) -> Result<u8> {
    let (source, torus, phi, branch, digest) = match (&a.config, &a.snapshot) {
        (Some(path), _) => {
            let p = prepare(path)?;
            let branch = p.cfg.branch();
            (path.display().to_string(), p.torus, p.phi0, branch, p.cfg.digest())
        }
        (None, Some(path)) => {
            let snap = read_snapshot(path)?;
            let torus = snap.config()?;
            let branch = a.branch.unwrap_or(torus.n() as i64);
            let digest = sha256_json(&snap.header);
            (path.display().to_string(), torus, snap.field, branch, digest)
        }
        (None, None) => return Err(anyhow!("give --config or --snapshot")),
    };
    let (theta_hat, reason, report) = match compute_Z(&torus, &phi, branch) {
        Ok(ZInvariant { theta_hat, .. }) if theta_hat.is_top_branch(torus.n()) => {
            (Some(theta_hat.theta_hat()), None, Some(check_subsolution_field(&torus, &phi, &theta_hat)))
        }
        Ok(ZInvariant { theta_hat, .. }) => (
            Some(theta_hat.theta_hat()),
            Some(format!("theta_hat = {} is not in the top branch", theta_hat.theta_hat())),
            None,
        ),
        Err(e @ (dhym::Error::BranchUnavailable { .. } | dhym::Error::ZeroInvariant { .. })) => (None, Some(e.to_string()), None),
        Err(e) => return Err(e.into()),
    };
    let passed = report.as_ref().is_some_and(|r| r.passed);
    let output = SubsolutionOutput {
        command: "check-subsolution",
        source,
        n: torus.n(),
        grid: torus.grid(),
        branch,
        theta_hat,
        reason,
        report,
        passed,
    };
    print_json(&output)?;
    if !passed {
        match &output.report {
            Some(r) => eprintln!("subsolution check failed: worst margin {} at {:?}", r.worst_margin, r.worst_coords),
            None => eprintln!("subsolution check failed: {}", output.reason.as_deref().unwrap_or("")),
        }
    }
    if let Some(dir) = &a.output_dir {
        let mut out = OutputDir::create(dir)?;
        out.write_json("subsolution.json", &output)?;
        out.finish("check-subsolution", &digest)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct HistoryRow {
    t: f64,
    residual: f64,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "V")]
    v: f64,
}

#[derive(Serialize)]
struct SchemeRun {
    exit_code: u8,
    error: Option<String>,
    summary: Option<RunSummary>,
    history: Vec<HistoryRow>,
}

#[derive(Serialize)]
struct PhaseRange {
    min: f64,
    max: f64,
    oscillation: f64,
}

#[derive(Serialize)]
struct CompareReport {
    command: &'static str,
    theta_hat: f64,
    initial_phase: PhaseRange,
    /// `Theta(phi_0) > (n-1) pi/2` everywhere.
    hypercritical_initial: bool,
    /// `osc Theta(phi_0) < pi/2`, where the monotone cone argument for LBMCF
    /// applies; when false both flows still run.
    lbmcf_monotone_regime: bool,
    tlpf: SchemeRun,
    lbmcf: SchemeRun,
    /// `sup |(u - mean u) - (w - mean w)|` between the two final fields.
    limit_difference: Option<f64>,
    limits_agree: Option<bool>,
}

fn mean_matched_difference(a: &ScalarField, b: &ScalarField) -> f64 {
    let (ma, mb) = (a.mean(), b.mean());
    a.values
        .iter()
        .zip(&b.values)
        .fold(0.0, |m, (x, y)| m.max(((x - ma) - (y - mb)).abs()))
}

pub fn compare_flows(a: &ConfigArgs) -> Result<u8> {
    let p = prepare(&a.config)?;
    let zi = compute_Z(&p.torus, &p.phi0, p.cfg.branch())?;
    let th = zi.theta_hat;
    let phases = eigen_field(&matrix_field(&p.torus, &p.phi0)).map_points(|l| l.iter().map(|v| v.atan()).sum::<f64>());
    let min = phases.iter().copied().fold(f64::INFINITY, f64::min);
    let max = phases.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let root = a.output_dir.clone().unwrap_or_else(|| p.cfg.output_dir.clone());
    let mut out = OutputDir::create(&root)?;

    let mut finals = Vec::new();
    let mut runs = Vec::new();
    for (scheme, prefix) in [(Scheme::Tlpf, "tlpf/"), (Scheme::Lbmcf, "lbmcf/")] {
        match execute(&p, &th, scheme, &mut out, prefix) {
            Ok(o) => {
                runs.push(SchemeRun {
                    exit_code: summary_exit_code(&o.summary),
                    error: None,
                    history: o
                        .trajectory
                        .iter()
                        .map(|r| HistoryRow {
                            t: r.t,
                            residual: r.residual,
                            j: r.j_val,
                            v: r.v_val,
                        })
                        .collect(),
                    summary: Some(o.summary),
                });
                finals.push(Some(o.final_state.phi));
            }
            Err(e) => {
                runs.push(SchemeRun {
                    exit_code: exit_code_of(&e),
                    error: Some(format!("{e:#}")),
                    summary: None,
                    history: Vec::new(),
                });
                finals.push(None);
            }
        }
    }
    let limit_difference = match (&finals[0], &finals[1]) {
        (Some(u), Some(w)) => Some(mean_matched_difference(u, w)),
        _ => None,
    };
    let lbmcf = runs.pop().expect("two runs");
    let tlpf = runs.pop().expect("two runs");
    let code = [tlpf.exit_code, lbmcf.exit_code]
        .into_iter()
        .find(|&c| c != EXIT_OK)
        .unwrap_or(EXIT_OK);
    let n = p.torus.n() as f64;
    let report = CompareReport {
        command: "compare-flows",
        theta_hat: th.theta_hat(),
        initial_phase: PhaseRange {
            min,
            max,
            oscillation: max - min,
        },
        hypercritical_initial: min > (n - 1.0) * FRAC_PI_2,
        lbmcf_monotone_regime: max - min < FRAC_PI_2,
        tlpf,
        lbmcf,
        limit_difference,
        limits_agree: limit_difference.map(|d| d <= LIMIT_AGREEMENT),
    };
    out.write_json("compare.json", &report)?;
    out.write_json("config.json", &p.cfg)?;
    out.finish("compare-flows", &p.cfg.digest())?;
    print_json(&report)?;
    Ok(code)
}
