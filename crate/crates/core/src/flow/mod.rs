//! Explicit time integration of the tangent Lagrangian phase flow
//! `d phi/dt = tan(Theta(A[phi]) - theta_hat)` and of the line bundle mean
//! curvature flow `d phi/dt = Theta(A[phi]) - theta_hat`.
//!
//! The right-hand side is evaluated pointwise from spectral Hessians, stepped
//! with classical RK4 and de-aliased with the 2/3 rule after every step. The
//! step size follows an explicit-diffusion CFL bound built from the trace of
//! the linearized operator.

mod initial;
mod io;
mod monitor;

pub use initial::{build_potential, initial_potential, uncalibrated_points, Mode};
pub use io::{write_summary_json, write_trajectory_csv, CSV_HEADER};
pub use monitor::{
    check_trajectory, decay_fit, phase_bounds_monitor, DecayFit, MonitorTolerances, Violation,
    ViolationKind,
};

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::functionals_CJ;
use crate::phase::{subsolution_test, BranchedAngle, Spectrum};
use crate::torus::{
    complex_volume_density, eigen_field, map_matrix_spectra_hat, matrix_field, quadrature_complex, quadrature_values,
    ScalarField, TorusConfig,
};
use num_complex::Complex64;

pub const DEFAULT_SAFETY: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "TLPF")]
    Tlpf,
    #[serde(rename = "LBMCF")]
    Lbmcf,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Tlpf => "TLPF",
            Scheme::Lbmcf => "LBMCF",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub phi: ScalarField,
    pub t: f64,
    pub step: u64,
    pub dt_last: f64,
}

impl FlowState {
    pub fn initial(phi: ScalarField) -> Self {
        Self {
            phi,
            t: 0.0,
            step: 0,
            dt_last: 0.0,
        }
    }
}

/// Right-hand side together with the largest diffusion trace on the grid.
#[derive(Debug, Clone)]
pub struct RhsEval {
    pub rhs: ScalarField,
    /// `max_x sum_i dF/dlambda_i`.
    pub max_trace: f64,
}

fn phase_offset(lambda: &[f64], th: &BranchedAngle) -> f64 {
    lambda.iter().map(|l| l.atan()).sum::<f64>() - th.theta_hat()
}

/// Right-hand side of `scheme` plus its diffusion trace, in one pass over the
/// eigenvalue field.
pub fn evaluate_rhs(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle, scheme: Scheme) -> Result<RhsEval> {
    evaluate_rhs_hat(cfg, &cfg.spectral().forward_real(&phi.values), th, scheme)
}

fn evaluate_rhs_hat(cfg: &TorusConfig, phi_hat: &[Complex64], th: &BranchedAngle, scheme: Scheme) -> Result<RhsEval> {
    let per_point: Vec<(f64, f64)> = map_matrix_spectra_hat(cfg, phi_hat, |l| {
        let d = phase_offset(l, th);
        let dtheta: f64 = l.iter().map(|v| 1.0 / (1.0 + v * v)).sum();
        match scheme {
            Scheme::Tlpf => {
                if d.abs() < FRAC_PI_2 {
                    let f = d.tan();
                    (f, (1.0 + f * f) * dtheta)
                } else {
                    (f64::NAN, FRAC_PI_2 - d.abs())
                }
            }
            Scheme::Lbmcf => (d, dtheta),
        }
    });
    if let Some(point) = per_point.iter().position(|(v, _)| v.is_nan()) {
        return Err(Error::LeftCalibratedRange {
            point,
            margin: per_point[point].1,
            suggested_dt: f64::NAN,
        });
    }
    let max_trace = per_point.iter().fold(0.0f64, |m, &(_, tr)| m.max(tr));
    Ok(RhsEval {
        rhs: ScalarField {
            values: per_point.into_iter().map(|(v, _)| v).collect(),
        },
        max_trace,
    })
}

/// `tan(Theta(A[phi]) - theta_hat)` pointwise.
pub fn tlpf_rhs(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> Result<ScalarField> {
    evaluate_rhs(cfg, phi, th, Scheme::Tlpf).map(|e| e.rhs)
}

/// `Theta(A[phi]) - theta_hat` pointwise.
pub fn lbmcf_rhs(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> ScalarField {
    evaluate_rhs(cfg, phi, th, Scheme::Lbmcf)
        .expect("LBMCF is defined off the strip")
        .rhs
}

fn dt_from_trace(cfg: &TorusConfig, max_trace: f64, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety.is_finite()) {
        return Err(Error::InvalidParameter(format!("safety factor must be positive, got {safety}")));
    }
    let k_max = cfg.grid() as f64 / 2.0;
    Ok(safety / (k_max * k_max * max_trace))
}

/// `safety / (k_max^2 max_x sum_i f_i)` with `k_max = N/2`.
pub fn cfl_dt(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle, safety: f64) -> Result<f64> {
    cfl_dt_for(cfg, phi, th, safety, Scheme::Tlpf)
}

/// [`cfl_dt`] for either scheme; LBMCF uses `sum_i 1/(1+lambda_i^2)`.
pub fn cfl_dt_for(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle, safety: f64, scheme: Scheme) -> Result<f64> {
    if !(safety > 0.0 && safety.is_finite()) {
        return Err(Error::InvalidParameter(format!("safety factor must be positive, got {safety}")));
    }
    let eval = evaluate_rhs(cfg, phi, th, scheme)?;
    dt_from_trace(cfg, eval.max_trace, safety)
}

fn with_dt_hint(err: Error, dt: f64) -> Error {
    match err {
        Error::LeftCalibratedRange { point, margin, .. } => Error::LeftCalibratedRange {
            point,
            margin,
            suggested_dt: 0.5 * dt,
        },
        other => other,
    }
}

fn rk4(
    cfg: &TorusConfig,
    state: &FlowState,
    th: &BranchedAngle,
    scheme: Scheme,
    dt: f64,
    k1: ScalarField,
) -> Result<FlowState> {
    // Stages run on projected spectra, so the step is plain RK4 for the
    // de-aliased system; projecting only the result costs an order.
    let grid = cfg.spectral();
    let project = |values: &[f64]| {
        let mut hat = grid.forward_real(values);
        grid.project(&mut hat);
        hat
    };
    let phi_hat = project(&state.phi.values);
    let shifted = |c: f64, k: &[Complex64]| -> Vec<Complex64> { phi_hat.iter().zip(k).map(|(a, b)| a + b * c).collect() };
    let stage = |input: Vec<Complex64>| {
        evaluate_rhs_hat(cfg, &input, th, scheme)
            .map(|e| project(&e.rhs.values))
            .map_err(|e| with_dt_hint(e, dt))
    };
    let k1 = project(&k1.values);
    let k2 = stage(shifted(0.5 * dt, &k1))?;
    let k3 = stage(shifted(0.5 * dt, &k2))?;
    let k4 = stage(shifted(dt, &k3))?;
    let w = dt / 6.0;
    let next: Vec<Complex64> = (0..phi_hat.len())
        .map(|p| phi_hat[p] + (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]) * w)
        .collect();
    let values = grid.inverse_real(next);
    Ok(FlowState {
        phi: ScalarField { values },
        t: state.t + dt,
        step: state.step + 1,
        dt_last: dt,
    })
}

/// One classical RK4 step of size `dt` with 2/3-rule de-aliasing of every
/// stage input and of the result.
pub fn step_rk4(cfg: &TorusConfig, state: &FlowState, th: &BranchedAngle, scheme: Scheme, dt: f64) -> Result<FlowState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let k1 = evaluate_rhs(cfg, &state.phi, th, scheme)
        .map_err(|e| with_dt_hint(e, dt))?
        .rhs;
    rk4(cfg, state, th, scheme, dt, k1)
}

/// One recorded sample of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub step: u64,
    pub c_val: f64,
    pub j_val: f64,
    pub v_val: f64,
    /// Sup-norm of the scheme's right-hand side.
    pub residual: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// `min_x (pi/2 - |Theta - theta_hat|)`.
    pub margin: f64,
    /// `|Z(phi_t) - Z(phi_0)| / |Z(phi_0)|`.
    pub z_drift: f64,
    /// `int v sin(Theta - theta_hat)`.
    pub v_sin: f64,
    /// `int v cos(Theta - theta_hat)`.
    pub v_cos: f64,
    /// `|Z(phi_0)|`, repeated so each row is self-contained.
    pub z_modulus: f64,
    /// `min_x lambda_n`.
    pub lambda_min: f64,
    /// Range of `sum_i f_i` over the grid (TLPF only; `NaN` for LBMCF).
    pub trace_f_min: f64,
    pub trace_f_max: f64,
    /// `osc phi_t`.
    pub phi_osc: f64,
}

/// Full set of monitored quantities at `phi`; `z0` is `Z(phi_0)`.
pub fn diagnose(
    cfg: &TorusConfig,
    phi: &ScalarField,
    th: &BranchedAngle,
    scheme: Scheme,
    z0: Complex64,
    t: f64,
    step: u64,
) -> DiagnosticsRow {
    let spectra = eigen_field(&matrix_field(cfg, phi));
    struct Point {
        theta: f64,
        v: f64,
        det: Complex64,
        lambda_n: f64,
        trace_f: f64,
        rhs: f64,
    }
    let pts: Vec<Point> = spectra.map_points(|l| {
        let theta: f64 = l.iter().map(|v| v.atan()).sum();
        let d = theta - th.theta_hat();
        let v = l.iter().map(|x| 1.0 + x * x).product::<f64>().sqrt();
        let dtheta: f64 = l.iter().map(|x| 1.0 / (1.0 + x * x)).sum();
        let (rhs, trace_f) = match scheme {
            Scheme::Tlpf if d.abs() < FRAC_PI_2 => (d.tan(), (1.0 + d.tan().powi(2)) * dtheta),
            Scheme::Tlpf => (f64::INFINITY, f64::NAN),
            Scheme::Lbmcf => (d, f64::NAN),
        };
        Point {
            theta,
            v,
            det: complex_volume_density(l),
            lambda_n: l[l.len() - 1],
            trace_f,
            rhs,
        }
    });
    let (c_val, j_val) = functionals_CJ(cfg, phi, th);
    let theta_min = pts.iter().map(|p| p.theta).fold(f64::INFINITY, f64::min);
    let theta_max = pts.iter().map(|p| p.theta).fold(f64::NEG_INFINITY, f64::max);
    let margin = FRAC_PI_2 - (theta_min - th.theta_hat()).abs().max((theta_max - th.theta_hat()).abs());
    let v_vals: Vec<f64> = pts.iter().map(|p| p.v).collect();
    let sin_vals: Vec<f64> = pts.iter().map(|p| p.v * (p.theta - th.theta_hat()).sin()).collect();
    let cos_vals: Vec<f64> = pts.iter().map(|p| p.v * (p.theta - th.theta_hat()).cos()).collect();
    let dets: Vec<Complex64> = pts.iter().map(|p| p.det).collect();
    let z = quadrature_complex(cfg, &dets);
    DiagnosticsRow {
        t,
        step,
        c_val,
        j_val,
        v_val: quadrature_values(cfg, &v_vals),
        residual: pts.iter().fold(0.0, |m, p| m.max(p.rhs.abs())),
        theta_min,
        theta_max,
        margin,
        z_drift: (z - z0).norm() / z0.norm(),
        v_sin: quadrature_values(cfg, &sin_vals),
        v_cos: quadrature_values(cfg, &cos_vals),
        z_modulus: z0.norm(),
        lambda_min: pts.iter().map(|p| p.lambda_n).fold(f64::INFINITY, f64::min),
        trace_f_min: pts.iter().map(|p| p.trace_f).fold(f64::INFINITY, f64::min),
        trace_f_max: pts.iter().map(|p| p.trace_f).fold(f64::NEG_INFINITY, f64::max),
        phi_osc: phi.oscillation(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub stop_tol: f64,
    pub t_max: f64,
    pub safety: f64,
    pub record_every: u64,
    /// Overrides the CFL step when set.
    pub fixed_dt: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Tlpf,
            stop_tol: 1e-8,
            t_max: 200.0,
            safety: DEFAULT_SAFETY,
            record_every: 100,
            fixed_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    TimeLimit,
    /// A stage left the calibrated strip: a discretization failure, since the
    /// continuum flow cannot leave it.
    LeftCalibratedRange {
        point: usize,
        margin: f64,
        suggested_dt: f64,
        t: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub converged: bool,
    pub termination: Termination,
    pub steps: u64,
    pub t_final: f64,
    pub residual_final: f64,
    /// `J(phi_0) - J(phi_final)`.
    pub j_total_drop: f64,
    /// `max_t |C(phi_t) - C(phi_0)| / (1 + |C(phi_0)|)`.
    pub c_drift: f64,
    /// `-slope` of the log-residual fit over the final half, when available.
    pub decay_rate: Option<f64>,
    pub decay_r2: Option<f64>,
    /// Largest `osc phi_t` along the run.
    pub max_phi_osc: f64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trajectory: Vec<DiagnosticsRow>,
    pub summary: RunSummary,
    pub final_state: FlowState,
}

/// Runs `scheme` from `phi0` until the sup-norm of the right-hand side drops
/// to `stop_tol` or `t` reaches `t_max`.
pub fn run_flow(cfg: &TorusConfig, phi0: &ScalarField, th: &BranchedAngle, opts: &RunOptions) -> Result<RunOutcome> {
    run_flow_observed(cfg, phi0, th, opts, |_| {})
}

/// [`run_flow`] with a callback invoked on every accepted state.
pub fn run_flow_observed(
    cfg: &TorusConfig,
    phi0: &ScalarField,
    th: &BranchedAngle,
    opts: &RunOptions,
    mut observer: impl FnMut(&FlowState),
) -> Result<RunOutcome> {
    if !th.is_top_branch(cfg.n()) {
        return Err(Error::InvalidBranch {
            theta_hat: th.theta_hat(),
            n: cfg.n(),
        });
    }
    if opts.record_every == 0 || !(opts.stop_tol > 0.0) || !(opts.t_max >= 0.0) {
        return Err(Error::InvalidParameter(
            "record_every must be >= 1, stop_tol > 0 and t_max >= 0".into(),
        ));
    }
    if opts.scheme == Scheme::Tlpf {
        let bad = uncalibrated_points(cfg, phi0, th);
        if !bad.is_empty() {
            return Err(Error::NotAlmostCalibrated { points: bad });
        }
    }
    let z0 = quadrature_complex(
        cfg,
        &eigen_field(&matrix_field(cfg, phi0)).map_points(complex_volume_density),
    );

    let mut state = FlowState::initial(phi0.clone());
    observer(&state);
    let mut trajectory = vec![diagnose(cfg, &state.phi, th, opts.scheme, z0, 0.0, 0)];
    let mut eval = evaluate_rhs(cfg, &state.phi, th, opts.scheme)?;
    let mut residual = eval.rhs.max_abs();
    let termination = loop {
        if residual <= opts.stop_tol {
            break Termination::Converged;
        }
        if state.t >= opts.t_max {
            break Termination::TimeLimit;
        }
        let dt = match opts.fixed_dt {
            Some(dt) => dt,
            None => dt_from_trace(cfg, eval.max_trace, opts.safety)?,
        };
        let dt = dt.min(opts.t_max - state.t).max(f64::MIN_POSITIVE);
        let next = rk4(cfg, &state, th, opts.scheme, dt, eval.rhs.clone())
            .and_then(|s| evaluate_rhs(cfg, &s.phi, th, opts.scheme).map_err(|e| with_dt_hint(e, dt)).map(|e| (s, e)));
        match next {
            Ok((s, e)) => {
                state = s;
                eval = e;
                residual = eval.rhs.max_abs();
                observer(&state);
                if state.step.is_multiple_of(opts.record_every) {
                    trajectory.push(diagnose(cfg, &state.phi, th, opts.scheme, z0, state.t, state.step));
                }
            }
            Err(Error::LeftCalibratedRange { point, margin, suggested_dt }) => {
                break Termination::LeftCalibratedRange {
                    point,
                    margin,
                    suggested_dt,
                    t: state.t,
                };
            }
            Err(other) => return Err(other),
        }
    };
    if trajectory.last().map(|r| r.step) != Some(state.step) {
        trajectory.push(diagnose(cfg, &state.phi, th, opts.scheme, z0, state.t, state.step));
    }
    let summary = summarize(&trajectory, opts, termination, residual, &state);
    Ok(RunOutcome {
        trajectory,
        summary,
        final_state: state,
    })
}

fn summarize(
    rows: &[DiagnosticsRow],
    opts: &RunOptions,
    termination: Termination,
    residual: f64,
    state: &FlowState,
) -> RunSummary {
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let c_drift = rows
        .iter()
        .map(|r| (r.c_val - first.c_val).abs())
        .fold(0.0, f64::max)
        / (1.0 + first.c_val.abs());
    let fit = decay_fit(rows);
    RunSummary {
        scheme: opts.scheme,
        converged: termination == Termination::Converged,
        termination,
        steps: state.step,
        t_final: state.t,
        residual_final: residual,
        j_total_drop: first.j_val - last.j_val,
        c_drift,
        decay_rate: fit.map(|f| -f.slope),
        decay_r2: fit.map(|f| f.r_squared),
        max_phi_osc: rows.iter().map(|r| r.phi_osc).fold(0.0, f64::max),
        violations: check_trajectory(rows, opts.scheme, &MonitorTolerances::default()),
    }
}

/// Grid-wide C-subsolution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionFieldReport {
    pub passed: bool,
    /// Smallest per-axis margin over the grid.
    pub worst_margin: f64,
    pub worst_point: usize,
    pub worst_coords: Vec<f64>,
    pub failing_points: usize,
    pub theta_min: f64,
    /// `n/(n-1) (theta_hat - pi/2)`; `None` for `n = 1`.
    pub necessary_bound: Option<f64>,
    /// Whether `theta_min` exceeds the necessary bound.
    pub necessary_bound_holds: Option<bool>,
}

pub fn check_subsolution_field(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> SubsolutionFieldReport {
    let spectra = eigen_field(&matrix_field(cfg, phi));
    let per_point: Vec<(f64, f64)> = spectra.map_points(|l| {
        let s = Spectrum::new(l.to_vec()).expect("finite eigenvalues");
        let verdict = subsolution_test(&s, th);
        (verdict.worst_margin(), l.iter().map(|v| v.atan()).sum())
    });
    let (worst_point, worst_margin) = per_point
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bp, bm), (p, &(m, _))| if m < bm { (p, m) } else { (bp, bm) });
    let theta_min = per_point.iter().map(|&(_, t)| t).fold(f64::INFINITY, f64::min);
    let n = cfg.n() as f64;
    let necessary_bound = (cfg.n() > 1).then(|| n / (n - 1.0) * (th.theta_hat() - FRAC_PI_2));
    SubsolutionFieldReport {
        passed: worst_margin > 0.0,
        worst_margin,
        worst_point,
        worst_coords: cfg.coords(worst_point),
        failing_points: per_point.iter().filter(|&&(m, _)| m <= 0.0).count(),
        theta_min,
        necessary_bound,
        necessary_bound_holds: necessary_bound.map(|b| theta_min > b),
    }
}
