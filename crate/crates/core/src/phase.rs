//! Pointwise symmetric functions of an eigenvalue vector.
//!
//! Everything here is a pure function of a sorted [`Spectrum`] and, where the
//! tangent phase is involved, a [`BranchedAngle`]. The tangent phase
//! `f = tan(theta - theta_hat)` is only defined on the calibrated strip
//! `|theta - theta_hat| < pi/2`; leaving it yields
//! [`Error::OutOfCalibratedRange`].

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of one symmetric matrix, sorted descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    /// Sorts `values` descending. Rejects empty or non-finite input.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty spectrum".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// A target angle together with the branch `k` it lies in:
/// `theta_hat` in `((k-1) pi/2, k pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchedAngle {
    theta_hat: f64,
    branch: i64,
}

impl BranchedAngle {
    pub fn new(theta_hat: f64) -> Result<Self> {
        if !theta_hat.is_finite() {
            return Err(Error::NonFinite);
        }
        let branch = (theta_hat / FRAC_PI_2).ceil() as i64;
        Ok(Self { theta_hat, branch })
    }

    /// Accepts only the open top branch `((n-1) pi/2, n pi/2)`.
    pub fn top_branch(n: usize, theta_hat: f64) -> Result<Self> {
        let angle = Self::new(theta_hat)?;
        if angle.is_top_branch(n) {
            Ok(angle)
        } else {
            Err(Error::InvalidBranch { theta_hat, n })
        }
    }

    pub fn theta_hat(&self) -> f64 {
        self.theta_hat
    }

    pub fn branch(&self) -> i64 {
        self.branch
    }

    pub fn is_top_branch(&self, n: usize) -> bool {
        let n = n as f64;
        self.theta_hat > (n - 1.0) * FRAC_PI_2 && self.theta_hat < n * FRAC_PI_2
    }
}

/// The Lagrangian phase `sum_i arctan(lambda_i)`.
pub fn theta(s: &Spectrum) -> f64 {
    theta_of(s.values())
}

/// [`theta`] on a raw slice (no sorting needed: the sum is symmetric).
pub fn theta_of(lambda: &[f64]) -> f64 {
    lambda.iter().map(|l| l.atan()).sum()
}

/// Signed distance `theta - theta_hat`, checked against the strip.
fn calibrated_offset(s: &Spectrum, th: &BranchedAngle) -> Result<f64> {
    let d = theta(s) - th.theta_hat;
    if d.abs() < FRAC_PI_2 {
        Ok(d)
    } else {
        Err(Error::OutOfCalibratedRange {
            distance: d.abs(),
            margin: FRAC_PI_2 - d.abs(),
        })
    }
}

/// Calibration margin `pi/2 - |theta - theta_hat|`; positive exactly on the strip.
pub fn calibration_margin(s: &Spectrum, th: &BranchedAngle) -> f64 {
    FRAC_PI_2 - (theta(s) - th.theta_hat).abs()
}

/// `f = tan(theta - theta_hat)`.
pub fn tangent_phase(s: &Spectrum, th: &BranchedAngle) -> Result<f64> {
    calibrated_offset(s, th).map(f64::tan)
}

/// `sqrt(prod_i (1 + lambda_i^2))`, the modulus of `det(I + iA)`.
pub fn volume_density(s: &Spectrum) -> f64 {
    s.values()
        .iter()
        .map(|l| 1.0 + l * l)
        .product::<f64>()
        .sqrt()
}

/// Pointwise phase data in one bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseEval {
    pub theta: f64,
    /// `None` off the calibrated strip.
    pub f: Option<f64>,
    pub v: f64,
    pub in_s: bool,
}

pub fn evaluate(s: &Spectrum, th: &BranchedAngle) -> PhaseEval {
    let f = tangent_phase(s, th).ok();
    PhaseEval {
        theta: theta(s),
        f,
        v: volume_density(s),
        in_s: f.is_some(),
    }
}

/// `f_i = (1 + f^2) / (1 + lambda_i^2)`.
pub fn grad_f(s: &Spectrum, th: &BranchedAngle) -> Result<Vec<f64>> {
    let f = tangent_phase(s, th)?;
    let scale = 1.0 + f * f;
    Ok(s.values().iter().map(|l| scale / (1.0 + l * l)).collect())
}

/// Hessian of `f` in eigenvalue coordinates:
/// `(1 + f^2) (2 f dtheta dtheta^T + D^2 theta)` with
/// `dtheta_i = 1/(1+lambda_i^2)` and `D^2 theta = diag(-2 lambda_i / (1+lambda_i^2)^2)`.
pub fn hessian_f(s: &Spectrum, th: &BranchedAngle) -> Result<DMatrix<f64>> {
    let f = tangent_phase(s, th)?;
    Ok(hessian_from_f(s.values(), f))
}

pub(crate) fn hessian_from_f(lambda: &[f64], f: f64) -> DMatrix<f64> {
    let n = lambda.len();
    let dtheta: Vec<f64> = lambda.iter().map(|l| 1.0 / (1.0 + l * l)).collect();
    let scale = 1.0 + f * f;
    DMatrix::from_fn(n, n, |i, j| {
        let mut h = 2.0 * f * (dtheta[i] * dtheta[j]);
        if i == j {
            h -= 2.0 * lambda[i] * dtheta[i] * dtheta[i];
        }
        scale * h
    })
}

/// First and second derivatives of `F(A) = f(lambda[A])` with respect to matrix
/// entries, evaluated at `A = diag(lambda)`.
#[derive(Debug, Clone)]
pub struct MatrixDerivatives {
    n: usize,
    /// `F^{ij} = delta_ij f_i`.
    pub first: DMatrix<f64>,
    /// `F^{ij,rs}` stored flat, index `((i n + j) n + r) n + s`.
    second: Vec<f64>,
}

impl MatrixDerivatives {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn second(&self, i: usize, j: usize, r: usize, s: usize) -> f64 {
        let n = self.n;
        self.second[((i * n + j) * n + r) * n + s]
    }

    /// `sum_ij F^{ij} E_ij`.
    pub fn contract_first(&self, e: &DMatrix<f64>) -> f64 {
        self.first.component_mul(e).sum()
    }

    /// `sum_{ij,rs} F^{ij,rs} E_ij E_rs`.
    pub fn contract_second(&self, e: &DMatrix<f64>) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        acc += self.second(i, j, r, s) * e[(i, j)] * e[(r, s)];
                    }
                }
            }
        }
        acc
    }
}

/// Off-diagonal coefficient `(f_i - f_j)/(lambda_i - lambda_j)`.
///
/// Written as `-(1+f^2)(lambda_i+lambda_j) / ((1+lambda_i^2)(1+lambda_j^2))`,
/// which has no cancellation and reduces to the analytic limit
/// `f_ii - f_ij` when `lambda_i = lambda_j`.
pub fn divided_difference(lambda_i: f64, lambda_j: f64, f: f64) -> f64 {
    -(1.0 + f * f) * (lambda_i + lambda_j) / ((1.0 + lambda_i * lambda_i) * (1.0 + lambda_j * lambda_j))
}

#[allow(non_snake_case)]
pub fn matrix_derivatives_F(s: &Spectrum, th: &BranchedAngle) -> Result<MatrixDerivatives> {
    let f = tangent_phase(s, th)?;
    let lambda = s.values();
    let n = lambda.len();
    let scale = 1.0 + f * f;
    let first = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            scale / (1.0 + lambda[i] * lambda[i])
        } else {
            0.0
        }
    });
    let hess = hessian_from_f(lambda, f);
    let mut second = vec![0.0; n * n * n * n];
    let idx = |i: usize, j: usize, r: usize, s: usize| ((i * n + j) * n + r) * n + s;
    for i in 0..n {
        for r in 0..n {
            second[idx(i, i, r, r)] = hess[(i, r)];
        }
        for j in 0..n {
            if i != j {
                second[idx(i, j, j, i)] = divided_difference(lambda[i], lambda[j], f);
            }
        }
    }
    Ok(MatrixDerivatives { n, first, second })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseClass {
    pub hypercritical: bool,
    pub supercritical: bool,
    pub almost_calibrated: bool,
}

pub fn classify(s: &Spectrum, th: &BranchedAngle) -> PhaseClass {
    let t = theta(s);
    let n = s.dim() as f64;
    PhaseClass {
        hypercritical: t > (n - 1.0) * FRAC_PI_2,
        supercritical: t > (n - 2.0) * FRAC_PI_2,
        almost_calibrated: (t - th.theta_hat).abs() < FRAC_PI_2,
    }
}

/// Solves `theta(partial, lambda_n) = sigma` for the last eigenvalue.
pub fn level_set_solve(partial: &[f64], sigma: f64) -> Option<f64> {
    let rest = sigma - theta_of(partial);
    (rest.abs() < FRAC_PI_2).then(|| rest.tan())
}

/// Result of the pointwise C-subsolution test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionVerdict {
    pub passed: bool,
    /// `sum_{i != j} arctan(lambda_i) - (theta_hat - pi/2)` for each `j`.
    pub margins: Vec<f64>,
}

impl SubsolutionVerdict {
    pub fn worst_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The level set `{mu in positive orthant : theta(lambda + mu) = theta_hat}` is
/// bounded iff every ray `lambda + s e_j` tends to a phase above `theta_hat`,
/// i.e. `sum_{i != j} arctan(lambda_i) > theta_hat - pi/2` for all `j`.
pub fn subsolution_test(s: &Spectrum, th: &BranchedAngle) -> SubsolutionVerdict {
    let arctans: Vec<f64> = s.values().iter().map(|l| l.atan()).collect();
    let total: f64 = arctans.iter().sum();
    let floor = th.theta_hat - FRAC_PI_2;
    let margins: Vec<f64> = arctans.iter().map(|a| (total - a) - floor).collect();
    SubsolutionVerdict {
        passed: margins.iter().all(|&m| m > 0.0),
        margins,
    }
}
