//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const THETA_22: f64 = 2.2142974355881808;
pub const RAY_S_MAX: f64 = 1e6;

/// `tan(sum arctan eig(a) - theta_hat)` with eigenvalues from [`jacobi_eigenvalues`].
pub fn phase_of_matrix(a: &DMatrix<f64>, theta_hat: f64) -> f64 {
    let theta: f64 = jacobi_eigenvalues(a).iter().map(|l| l.atan()).sum();
    (theta - theta_hat).tan()
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix. On perturbations of a
/// diagonal matrix each eigenvalue comes out with a small relative error, which a
/// QR-type solver does not give for the small eigenvalues.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _ in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 || apq.abs() <= 1e-300 {
                    continue;
                }
                let (app, aqq) = (m[(p, p)], m[(q, q)]);
                if apq.abs() < f64::EPSILON * 1e-3 * app.abs().min(aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n).map(|i| m[(i, i)]).collect()
}

pub fn theta_direct(l: &[f64]) -> f64 {
    l.iter().map(|x| x.atan()).sum()
}

pub fn tan_phase_direct(l: &[f64], theta_hat: f64) -> f64 {
    (theta_direct(l) - theta_hat).tan()
}

/// Symmetric matrix with Gaussian entries, unit Frobenius norm.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let mut e = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    e = (&e + e.transpose()) * 0.5;
    let norm = e.norm();
    e / norm
}

/// First and second derivative of `t -> g(t)` at 0, fourth-order stencils.
pub fn fd_derivatives(g: impl Fn(f64) -> f64, h: f64) -> (f64, f64) {
    let (m2, m1, z, p1, p2) = (g(-2.0 * h), g(-h), g(0.0), g(h), g(2.0 * h));
    let first = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let second = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h);
    (first, second)
}

/// Central-difference gradient of `tan(theta - theta_hat)` in eigenvalue
/// coordinates.
pub fn fd_grad(l: &[f64], theta_hat: f64) -> Vec<f64> {
    (0..l.len())
        .map(|i| {
            let h = 1e-4 * (1.0 + l[i].abs());
            let g = |t: f64| {
                let mut x = l.to_vec();
                x[i] += t;
                tan_phase_direct(&x, theta_hat)
            };
            fd_derivatives(g, h).0
        })
        .collect()
}

pub fn fd_hessian(l: &[f64], theta_hat: f64) -> DMatrix<f64> {
    let n = l.len();
    let f = |x: &[f64]| tan_phase_direct(x, theta_hat);
    DMatrix::from_fn(n, n, |i, j| {
        let hi = 1e-4 * (1.0 + l[i].abs());
        let hj = 1e-4 * (1.0 + l[j].abs());
        let at = |di: f64, dj: f64| {
            let mut x = l.to_vec();
            x[i] += di;
            x[j] += dj;
            f(&x)
        };
        if i == j {
            (-at(2.0 * hi, 0.0) + 16.0 * at(hi, 0.0) - 30.0 * at(0.0, 0.0) + 16.0 * at(-hi, 0.0)
                - at(-2.0 * hi, 0.0))
                / (12.0 * hi * hi)
        } else {
            (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj)
        }
    })
}

/// Ray search for the C-subsolution property. For each `j` the phase along
/// `lambda + s e_j` is increasing; bisection locates where it reaches
/// `theta_hat`. The level set is bounded iff every ray reaches it before
/// `RAY_S_MAX` (or the phase already exceeds `theta_hat` at `s = 0`).
pub fn ray_search_bounded(l: &[f64], theta_hat: f64) -> bool {
    (0..l.len()).all(|j| ray_hit(l, j, theta_hat).is_some())
}

/// Smallest `s in [0, RAY_S_MAX]` with `theta(lambda + s e_j) >= theta_hat`.
pub fn ray_hit(l: &[f64], j: usize, theta_hat: f64) -> Option<f64> {
    let g = |s: f64| {
        let mut x = l.to_vec();
        x[j] += s;
        theta_direct(&x) - theta_hat
    };
    if g(0.0) >= 0.0 {
        return Some(0.0);
    }
    if g(RAY_S_MAX) < 0.0 {
        return None;
    }
    let (mut lo, mut hi) = (0.0, RAY_S_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + hi) {
            break;
        }
    }
    Some(hi)
}

/// `(n/(n-1)) (theta_hat - pi/2)`.
pub fn remark_bound(n: usize, theta_hat: f64) -> f64 {
    n as f64 / (n as f64 - 1.0) * (theta_hat - FRAC_PI_2)
}
