//! Numerical certification of tan-concavity on the calibrated strip.
//!
//! The certificate samples the strip, evaluates the Hessian of
//! `f = tan(theta - theta_hat)` in eigenvalue coordinates and records the worst
//! normalized top eigenvalue. The matrix objects of the concavity argument
//! (`T`, `M`, the principal minors of `T E + diag(lambda)`) are exposed so
//! they can be checked independently.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{hessian_f, theta, BranchedAngle, Spectrum};
use crate::sampling::StripSampler;

pub const POLE_GUARD: f64 = 1e-12;
pub const ZERO_EIGENVALUE_GUARD: f64 = 1e-14;
/// Pass threshold for the normalized top Hessian eigenvalue.
pub const CONCAVITY_TOLERANCE: f64 = 1e-9;
/// A below-branch sample counts as a witness above this raw eigenvalue.
pub const WITNESS_THRESHOLD: f64 = 1e-6;

/// `T(lambda) = tan((n-1) pi/2 - theta(lambda))`.
#[allow(non_snake_case)]
pub fn build_T(s: &Spectrum) -> Result<f64> {
    let t = theta(s);
    let arg = (s.dim() as f64 - 1.0) * FRAC_PI_2 - t;
    if arg.cos().abs() < POLE_GUARD {
        return Err(Error::TangentPole { theta: t });
    }
    Ok(arg.tan())
}

/// `M_ij = (T + delta_ij lambda_i) / ((1 + lambda_i^2)(1 + lambda_j^2))`.
#[allow(non_snake_case)]
pub fn build_M(s: &Spectrum) -> Result<DMatrix<f64>> {
    let t = build_T(s)?;
    let l = s.values();
    let n = l.len();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { l[i] } else { 0.0 };
        (t + diag) / ((1.0 + l[i] * l[i]) * (1.0 + l[j] * l[j]))
    }))
}

/// `T E + diag(lambda)` restricted to `subset`.
pub fn minor_matrix(s: &Spectrum, t: f64, subset: &[usize]) -> DMatrix<f64> {
    let l = s.values();
    let k = subset.len();
    DMatrix::from_fn(k, k, |a, b| {
        if a == b {
            t + l[subset[a]]
        } else {
            t
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinorIdentityReport {
    pub subset: Vec<usize>,
    pub det_direct: f64,
    pub det_formula: f64,
    /// `|det_direct - det_formula| / (1 + |det_direct|)`.
    pub relative_error: f64,
}

/// Compares the LU determinant of the principal minor with
/// `prod_{i in I} lambda_i (1 + sum_{i in I} T / lambda_i)`.
pub fn minor_identity_check(s: &Spectrum, subset: &[usize]) -> Result<MinorIdentityReport> {
    let l = s.values();
    if subset.is_empty() {
        return Err(Error::InvalidParameter("empty index subset".into()));
    }
    for &i in subset {
        if i >= l.len() {
            return Err(Error::DimensionMismatch {
                expected: l.len(),
                found: i + 1,
            });
        }
        if l[i].abs() < ZERO_EIGENVALUE_GUARD {
            return Err(Error::ZeroEigenvalue { index: i });
        }
    }
    let t = build_T(s)?;
    let det_direct = minor_matrix(s, t, subset).determinant();
    let product: f64 = subset.iter().map(|&i| l[i]).product();
    let sum: f64 = subset.iter().map(|&i| t / l[i]).sum();
    let det_formula = product * (1.0 + sum);
    Ok(MinorIdentityReport {
        subset: subset.to_vec(),
        det_direct,
        det_formula,
        relative_error: (det_direct - det_formula).abs() / (1.0 + det_direct.abs()),
    })
}

/// All nonempty subsets of `0..n`, as sorted index lists.
pub fn nonempty_subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (1u32..(1u32 << n)).map(move |mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

/// Largest eigenvalue divided by `1 + ||H||_F`.
pub fn normalized_top_eigenvalue(h: &DMatrix<f64>) -> f64 {
    let top = h
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    top / (1.0 + h.norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub n: usize,
    pub theta_hat: f64,
    pub seed: u64,
    pub samples: usize,
    /// Samples with `theta >= (n-1) pi/2`.
    pub case1_samples: usize,
    /// Samples with `theta_hat - pi/2 < theta < (n-1) pi/2`.
    pub case2_samples: usize,
    pub worst_hessian_eig: f64,
    pub worst_sample: Spectrum,
    /// Smallest normalized eigenvalue of `M` seen over the samples.
    pub min_m_eig: f64,
    /// Samples where `M` had a normalized eigenvalue below `-1e-10`.
    pub m_findings: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Samples the strip and checks that the Hessian of `f` is negative
/// semidefinite everywhere, up to [`CONCAVITY_TOLERANCE`] after normalization.
pub fn certify_concavity(
    n: usize,
    theta_hat: f64,
    sample_count: usize,
    seed: u64,
) -> Result<ConcavityReport> {
    let th = BranchedAngle::top_branch(n, theta_hat)?;
    if sample_count == 0 {
        return Err(Error::InvalidParameter("sample_count must be >= 1".into()));
    }
    let sampler = StripSampler::new(n, theta_hat);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = (n as f64 - 1.0) * FRAC_PI_2;

    let mut worst = f64::NEG_INFINITY;
    let mut worst_sample = None;
    let (mut case1, mut case2) = (0, 0);
    let mut min_m_eig = f64::INFINITY;
    let mut m_findings = 0;
    for _ in 0..sample_count {
        let s = sampler.sample(&mut rng);
        if theta(&s) >= split {
            case1 += 1;
        } else {
            case2 += 1;
        }
        let h = hessian_f(&s, &th)?;
        let e = normalized_top_eigenvalue(&h);
        if let Ok(m) = build_M(&s) {
            let bottom = -normalized_top_eigenvalue(&(-m));
            min_m_eig = min_m_eig.min(bottom);
            if bottom < -1e-10 {
                m_findings += 1;
            }
        }
        if e > worst {
            worst = e;
            worst_sample = Some(s);
        }
    }
    Ok(ConcavityReport {
        n,
        theta_hat,
        seed,
        samples: sample_count,
        case1_samples: case1,
        case2_samples: case2,
        worst_hessian_eig: worst,
        worst_sample: worst_sample.expect("at least one sample"),
        min_m_eig,
        m_findings,
        tolerance: CONCAVITY_TOLERANCE,
        passed: worst <= CONCAVITY_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonConcavityWitness {
    pub spectrum: Spectrum,
    pub theta: f64,
    /// Largest (raw) eigenvalue of the Hessian at the witness.
    pub max_eigenvalue: f64,
    /// Number of samples drawn up to and including the witness.
    pub samples_used: usize,
}

/// Random search of the strip for a point where the Hessian of `f` has an
/// eigenvalue above [`WITNESS_THRESHOLD`].
pub fn find_nonconcavity(
    n: usize,
    theta_hat_below: f64,
    budget: usize,
    seed: u64,
) -> Option<NonConcavityWitness> {
    let th = BranchedAngle::new(theta_hat_below).ok()?;
    let sampler = StripSampler::new(n, theta_hat_below);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..budget {
        let s = sampler.sample(&mut rng);
        let Ok(h) = hessian_f(&s, &th) else { continue };
        let top = h
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if top > WITNESS_THRESHOLD {
            return Some(NonConcavityWitness {
                theta: theta(&s),
                spectrum: s,
                max_eigenvalue: top,
                samples_used: k + 1,
            });
        }
    }
    None
}
