//! Checks run over a recorded trajectory. Each failed check becomes a
//! [`Violation`]; none of them stop the run.

use serde::{Deserialize, Serialize};

use super::{DiagnosticsRow, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// `J` went up between recorded steps (TLPF).
    JIncrease,
    /// `V` went up between recorded steps.
    VIncrease,
    /// `C` moved away from its initial value (TLPF).
    CDrift,
    /// Phase left `[theta_min(0), theta_max(0)]` (TLPF).
    PhaseBounds,
    /// Calibration margin not positive (TLPF).
    Margin,
    ZDrift,
    /// `int v sin(Theta - theta_hat)` not zero.
    SinIdentity,
    /// `int v cos(Theta - theta_hat)` not `|Z|`.
    CosIdentity,
    /// `min lambda_n` dropped below the bound from the initial data.
    LambdaBound,
    /// `sum_i f_i` left `[m/2, 2M]` (TLPF).
    TraceBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub step: u64,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorTolerances {
    /// Scaled by `1 + |value|`.
    pub monotone: f64,
    /// Relative to `1 + |C(phi_0)|`.
    pub c_drift: f64,
    pub phase: f64,
    pub z_drift: f64,
    /// Relative to `V` (sin) and `|Z|` (cos).
    pub identity: f64,
    pub lambda_slack: f64,
    pub trace_factor: f64,
}

impl Default for MonitorTolerances {
    fn default() -> Self {
        Self {
            monotone: 1e-12,
            c_drift: 1e-6,
            phase: 1e-6,
            z_drift: 1e-8,
            identity: 1e-8,
            lambda_slack: 0.1,
            trace_factor: 2.0,
        }
    }
}

fn violation(row: &DiagnosticsRow, kind: ViolationKind, value: f64, bound: f64) -> Violation {
    Violation {
        kind,
        step: row.step,
        t: row.t,
        value,
        bound,
    }
}

/// Flags rows whose phase range escapes the initial one by more than `tol`.
pub fn phase_bounds_monitor(rows: &[DiagnosticsRow], tol: f64) -> Vec<Violation> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    rows.iter()
        .filter_map(|r| {
            if r.theta_min < first.theta_min - tol {
                Some(violation(r, ViolationKind::PhaseBounds, r.theta_min, first.theta_min - tol))
            } else if r.theta_max > first.theta_max + tol {
                Some(violation(r, ViolationKind::PhaseBounds, r.theta_max, first.theta_max + tol))
            } else {
                None
            }
        })
        .collect()
}

/// Every monitor that applies to `scheme`.
pub fn check_trajectory(rows: &[DiagnosticsRow], scheme: Scheme, tol: &MonitorTolerances) -> Vec<Violation> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let tlpf = scheme == Scheme::Tlpf;
    let mut out = Vec::new();
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if tlpf && b.j_val - a.j_val > tol.monotone * (1.0 + a.j_val.abs()) {
            out.push(violation(b, ViolationKind::JIncrease, b.j_val - a.j_val, tol.monotone * (1.0 + a.j_val.abs())));
        }
        if b.v_val - a.v_val > tol.monotone * (1.0 + a.v_val.abs()) {
            out.push(violation(b, ViolationKind::VIncrease, b.v_val - a.v_val, tol.monotone * (1.0 + a.v_val.abs())));
        }
    }
    if tlpf {
        out.extend(phase_bounds_monitor(rows, tol.phase));
    }
    let lambda_floor = -(1.0 + tol.lambda_slack) * first.lambda_min.abs() - 1e-12;
    for r in rows {
        if tlpf {
            let drift = (r.c_val - first.c_val).abs() / (1.0 + first.c_val.abs());
            if drift > tol.c_drift {
                out.push(violation(r, ViolationKind::CDrift, drift, tol.c_drift));
            }
            if !(r.margin > 0.0) {
                out.push(violation(r, ViolationKind::Margin, r.margin, 0.0));
            }
            let lo = first.trace_f_min / tol.trace_factor;
            let hi = first.trace_f_max * tol.trace_factor;
            if r.trace_f_min < lo || r.trace_f_max > hi {
                out.push(violation(r, ViolationKind::TraceBound, r.trace_f_min.min(r.trace_f_max), lo));
            }
        }
        if r.z_drift > tol.z_drift {
            out.push(violation(r, ViolationKind::ZDrift, r.z_drift, tol.z_drift));
        }
        if r.v_sin.abs() > tol.identity * r.v_val {
            out.push(violation(r, ViolationKind::SinIdentity, r.v_sin, tol.identity * r.v_val));
        }
        if (r.v_cos - r.z_modulus).abs() > tol.identity * r.z_modulus {
            out.push(violation(r, ViolationKind::CosIdentity, r.v_cos, tol.identity * r.z_modulus));
        }
        if r.lambda_min < lambda_floor {
            out.push(violation(r, ViolationKind::LambdaBound, r.lambda_min, lambda_floor));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least-squares fit of `ln(residual)` against `t` over rows with
/// `t >= t_final / 2`. Needs at least three usable rows.
pub fn decay_fit(rows: &[DiagnosticsRow]) -> Option<DecayFit> {
    let t_final = rows.last()?.t;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= 0.5 * t_final && r.residual > 0.0 && r.residual.is_finite())
        .map(|r| (r.t, r.residual.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r_squared = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(DecayFit {
        slope,
        intercept: my - slope * mt,
        r_squared,
        samples: pts.len(),
    })
}
