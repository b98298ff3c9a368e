//! The Calabi-Yau functional, its rotated real and imaginary parts `C` and
//! `J`, and the volume functional `V`.
//!
//! The wedge products `(alpha + i chi_phi)^j ^ (alpha + i chi_hat)^(n-j)` are
//! evaluated pointwise as mixed determinants `D_j`, the coefficients of
//!
//! ```text
//! det(s M_phi + t M_hat) = sum_j C(n,j) s^j t^(n-j) D_j
//! ```
//!
//! with `M_phi = I + i A[phi]` and `M_hat = I + i B`. They are recovered by
//! sampling `p(s) = det(s M_phi + (1-s) M_hat)` at Chebyshev nodes on `[0,1]`,
//! solving for the monomial coefficients and converting to the Bernstein basis.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::phase::BranchedAngle;
use crate::torus::{
    eigen_field, matrix_field, quadrature_complex, quadrature_values, ScalarField, TorusConfig,
};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Precomputed node set and extraction matrix for dimension `n`.
#[derive(Debug, Clone)]
pub struct MixedDensity {
    n: usize,
    nodes: Vec<f64>,
    /// Maps `p(nodes)` to `(D_0, ..., D_n)`.
    extract: DMatrix<f64>,
}

impl MixedDensity {
    pub fn new(n: usize) -> Self {
        let m = n + 1;
        let nodes: Vec<f64> = (0..m)
            .map(|k| 0.5 * (1.0 - ((2 * k + 1) as f64 * PI / (2 * m) as f64).cos()))
            .collect();
        let vandermonde = DMatrix::from_fn(m, m, |k, p| nodes[k].powi(p as i32));
        let inv = vandermonde
            .try_inverse()
            .expect("Chebyshev Vandermonde matrix is invertible");
        // monomial a_p -> Bernstein coefficient D_j = sum_{p<=j} C(j,p)/C(n,p) a_p
        let to_bernstein = DMatrix::from_fn(m, m, |j, p| {
            if p <= j {
                binomial(j, p) / binomial(n, p)
            } else {
                0.0
            }
        });
        Self {
            n,
            nodes,
            extract: to_bernstein * inv,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// All of `D_0, ..., D_n` for the pair `(m_phi, m_hat)`.
    pub fn densities(&self, m_phi: &DMatrix<Complex64>, m_hat: &DMatrix<Complex64>) -> Vec<Complex64> {
        assert_eq!(m_phi.nrows(), self.n);
        assert_eq!(m_hat.nrows(), self.n);
        let samples: Vec<Complex64> = self
            .nodes
            .iter()
            .map(|&s| {
                let pencil = m_phi * Complex64::new(s, 0.0) + m_hat * Complex64::new(1.0 - s, 0.0);
                pencil.determinant()
            })
            .collect();
        (0..=self.n)
            .map(|j| {
                samples
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * self.extract[(j, k)])
                    .sum()
            })
            .collect()
    }
}

/// `D_j` for a single `j`.
pub fn mixed_density(m_phi: &DMatrix<Complex64>, m_hat: &DMatrix<Complex64>, j: usize) -> Complex64 {
    let n = m_phi.nrows();
    assert!(j <= n, "j must lie in 0..=n");
    MixedDensity::new(n).densities(m_phi, m_hat)[j]
}

/// `I + i A` for a real symmetric `A`.
pub fn calibrated_matrix(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(if i == j { 1.0 } else { 0.0 }, a[(i, j)])
    })
}

/// `CY(phi) = 1/(n+1) sum_j int phi D_j`.
pub fn calabi_yau(cfg: &TorusConfig, phi: &ScalarField) -> Complex64 {
    let n = cfg.n();
    let field = matrix_field(cfg, phi);
    let mixer = MixedDensity::new(n);
    let m_hat = calibrated_matrix(cfg.b());
    let integrand: Vec<Complex64> = (0..cfg.points())
        .into_par_iter()
        .map(|p| {
            let m_phi = calibrated_matrix(&field.matrix(p));
            let sum: Complex64 = mixer.densities(&m_phi, &m_hat).into_iter().sum();
            sum * phi.values[p]
        })
        .collect();
    quadrature_complex(cfg, &integrand) / (n as f64 + 1.0)
}

/// `(C, J) = (Re, -Im)` of `e^{-i theta_hat} CY(phi)`.
#[allow(non_snake_case)]
pub fn functionals_CJ(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> (f64, f64) {
    rotate_cy(calabi_yau(cfg, phi), th)
}

fn rotate_cy(cy: Complex64, th: &BranchedAngle) -> (f64, f64) {
    let rotated = cy * Complex64::from_polar(1.0, -th.theta_hat());
    (rotated.re, -rotated.im)
}

/// `V(phi) = int v_phi`.
pub fn volume_functional(cfg: &TorusConfig, phi: &ScalarField) -> f64 {
    let spectra = eigen_field(&matrix_field(cfg, phi));
    let dens = spectra.map_points(|l| {
        l.iter().map(|x| 1.0 + x * x).product::<f64>().sqrt()
    });
    quadrature_values(cfg, &dens)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    pub cy: Complex64,
    pub c_val: f64,
    pub j_val: f64,
    pub v_val: f64,
}

pub fn evaluate_functionals(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> FunctionalValues {
    let cy = calabi_yau(cfg, phi);
    let (c_val, j_val) = rotate_cy(cy, th);
    FunctionalValues {
        cy,
        c_val,
        j_val,
        v_val: volume_functional(cfg, phi),
    }
}
