//! Flat torus `[0, 2pi)^n` with invariant potentials.
//!
//! Potentials depend on the real torus coordinates only, so `i ddbar phi`
//! reduces to the real Hessian and `A[phi] = B + D^2 phi` is a real symmetric
//! matrix at every grid point. The flat Kahler form is the identity and the
//! total volume is `(2pi)^n`.

mod snapshot;
mod spectral;

pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SnapshotHeader};
pub use spectral::SpectralGrid;

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pairwise_mean, pairwise_sum, symmetric_eigenvalues_into};
use crate::phase::{BranchedAngle, Spectrum};

/// Below this many grid points, or on a one-thread pool, the per-point maps
/// run sequentially.
const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Clone)]
pub struct TorusConfig {
    n: usize,
    grid: usize,
    b: DMatrix<f64>,
    volume: f64,
    spectral: SpectralGrid,
}

impl TorusConfig {
    /// `b_row_major` holds the constant reference matrix `B`.
    pub fn new(n: usize, grid: usize, b_row_major: &[f64]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension n must be >= 1".into()));
        }
        if grid < 8 || !grid.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even and >= 8, got {grid}"
            )));
        }
        if b_row_major.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: b_row_major.len(),
            });
        }
        if b_row_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let b = DMatrix::from_row_slice(n, n, b_row_major);
        if (&b - b.transpose()).abs().max() > 1e-14 {
            return Err(Error::InvalidParameter("B must be symmetric".into()));
        }
        Ok(Self {
            n,
            grid,
            b,
            volume: TAU.powi(n as i32),
            spectral: SpectralGrid::new(n, grid),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn points(&self) -> usize {
        self.grid.pow(self.n as u32)
    }

    pub fn spectral(&self) -> &SpectralGrid {
        &self.spectral
    }

    /// Coordinates `x_a = 2pi i_a / N` of flat position `p` (last axis fastest).
    pub fn coords(&self, p: usize) -> Vec<f64> {
        (0..self.n)
            .map(|a| TAU * self.spectral.axis_index(p, a) as f64 / self.grid as f64)
            .collect()
    }

    /// Same configuration at a different resolution.
    pub fn with_grid(&self, grid: usize) -> Result<Self> {
        let b: Vec<f64> = self.b.transpose().iter().copied().collect();
        Self::new(self.n, grid, &b)
    }
}

/// Real periodic samples on the grid, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(cfg: &TorusConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != cfg.points() {
            return Err(Error::DimensionMismatch {
                expected: cfg.points(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn zeros(cfg: &TorusConfig) -> Self {
        Self {
            values: vec![0.0; cfg.points()],
        }
    }

    pub fn constant(cfg: &TorusConfig, c: f64) -> Self {
        Self {
            values: vec![c; cfg.points()],
        }
    }

    pub fn from_fn(cfg: &TorusConfig, f: impl Fn(&[f64]) -> f64) -> Self {
        Self {
            values: (0..cfg.points()).map(|p| f(&cfg.coords(p))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        pairwise_mean(&self.values)
    }

    /// `max - min`.
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        hi - lo
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> ScalarField {
        ScalarField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Per-point real symmetric `n x n` matrices, each stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianField {
    n: usize,
    data: Vec<f64>,
}

impl HermitianField {
    pub fn from_blocks(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || !data.len().is_multiple_of(n * n) {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.data.len() / (self.n * self.n)
    }

    pub fn block(&self, p: usize) -> &[f64] {
        let m = self.n * self.n;
        &self.data[p * m..(p + 1) * m]
    }

    pub fn matrix(&self, p: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, self.block(p))
    }

    /// Largest asymmetry `|A_ij - A_ji|` over the field.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.n;
        (0..self.points())
            .flat_map(|p| {
                let b = self.block(p);
                (0..n).flat_map(move |i| (0..n).map(move |j| (b[i * n + j] - b[j * n + i]).abs()))
            })
            .fold(0.0, f64::max)
    }
}

/// Per-point descending eigenvalues, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumField {
    n: usize,
    values: Vec<f64>,
}

impl SpectrumField {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn at(&self, p: usize) -> &[f64] {
        &self.values[p * self.n..(p + 1) * self.n]
    }

    pub fn spectrum(&self, p: usize) -> Spectrum {
        Spectrum::new(self.at(p).to_vec()).expect("eigenvalues of a finite symmetric matrix")
    }

    /// Applies `f` to every point's eigenvalues.
    pub fn map_points<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync + Send,
    {
        if self.points() >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            self.values.par_chunks(self.n).map(&f).collect()
        } else {
            self.values.chunks(self.n).map(f).collect()
        }
    }
}

/// Spectral Hessian `D^2 phi` at every grid point.
pub fn hessian_field(cfg: &TorusConfig, phi: &ScalarField) -> HermitianField {
    assemble(cfg, phi, false)
}

/// `A[phi] = B + D^2 phi`.
pub fn matrix_field(cfg: &TorusConfig, phi: &ScalarField) -> HermitianField {
    assemble(cfg, phi, true)
}

fn assemble(cfg: &TorusConfig, phi: &ScalarField, add_b: bool) -> HermitianField {
    let n = cfg.n;
    let comps = cfg.spectral.hessian_components(&phi.values);
    let points = cfg.points();
    let mut data = vec![0.0; points * n * n];
    let mut c = 0;
    for i in 0..n {
        for j in i..n {
            let base = if add_b { cfg.b[(i, j)] } else { 0.0 };
            for (p, v) in comps[c].iter().enumerate() {
                data[p * n * n + i * n + j] = base + v;
                data[p * n * n + j * n + i] = base + v;
            }
            c += 1;
        }
    }
    HermitianField { n, data }
}

/// Applies `f` to the descending eigenvalues of `A[phi]` at every point,
/// without materializing the matrix or spectrum fields.
pub fn map_matrix_spectra<T, F>(cfg: &TorusConfig, phi: &ScalarField, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    map_matrix_spectra_hat(cfg, &cfg.spectral.forward_real(&phi.values), f)
}

/// [`map_matrix_spectra`] for a potential given by its unnormalized spectrum.
pub fn map_matrix_spectra_hat<T, F>(cfg: &TorusConfig, phi_hat: &[Complex64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    let n = cfg.n;
    let comps = cfg.spectral.hessian_components_hat(phi_hat);
    let pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, cfg.b[(i, j)]))
        .collect();
    let at = |p: usize, block: &mut [f64], eig: &mut [f64]| {
        for (c, &(i, j, b)) in pairs.iter().enumerate() {
            block[i * n + j] = b + comps[c][p];
            block[j * n + i] = b + comps[c][p];
        }
        symmetric_eigenvalues_into(block, n, eig);
        f(eig)
    };
    let points = cfg.points();
    if points >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
        (0..points)
            .into_par_iter()
            .map_init(|| (vec![0.0; n * n], vec![0.0; n]), |(block, eig), p| at(p, block, eig))
            .collect()
    } else {
        let (mut block, mut eig) = (vec![0.0; n * n], vec![0.0; n]);
        (0..points).map(|p| at(p, &mut block, &mut eig)).collect()
    }
}

/// Descending eigenvalues at every point.
pub fn eigen_field(field: &HermitianField) -> SpectrumField {
    let n = field.n;
    let mut values = vec![0.0; field.data.len() / n];
    let work = |(block, out): (&[f64], &mut [f64])| symmetric_eigenvalues_into(block, n, out);
    if field.points() >= PAR_THRESHOLD {
        field
            .data
            .par_chunks(n * n)
            .zip(values.par_chunks_mut(n))
            .for_each(work);
    } else {
        field.data.chunks(n * n).zip(values.chunks_mut(n)).for_each(work);
    }
    SpectrumField { n, values }
}

/// `volume * mean(samples)`.
pub fn quadrature(cfg: &TorusConfig, field: &ScalarField) -> f64 {
    quadrature_values(cfg, &field.values)
}

pub fn quadrature_values(cfg: &TorusConfig, values: &[f64]) -> f64 {
    cfg.volume * pairwise_sum(values) / values.len() as f64
}

pub fn quadrature_complex(cfg: &TorusConfig, values: &[Complex64]) -> Complex64 {
    pairwise_sum(values) * (cfg.volume / values.len() as f64)
}

/// `det(I + iA) = prod_j (1 + i lambda_j)`.
pub fn complex_volume_density(lambda: &[f64]) -> Complex64 {
    lambda
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, &l| acc * Complex64::new(1.0, l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZInvariant {
    pub z: Complex64,
    pub theta_hat: BranchedAngle,
    pub modulus: f64,
}

/// Lifts `arg` by a multiple of 2pi into `((branch-1) pi/2, branch pi/2]`.
pub fn lift_to_branch(arg: f64, branch: i64) -> Result<f64> {
    let upper = branch as f64 * FRAC_PI_2;
    let k = ((upper - arg) / TAU).floor();
    let lifted = arg + k * TAU;
    if lifted > upper - FRAC_PI_2 && lifted <= upper {
        Ok(lifted)
    } else {
        Err(Error::BranchUnavailable { arg, branch })
    }
}

/// `Z = int det(I + i A[phi])` and its branch-lifted angle. `branch` defaults
/// to `n` in callers that need the top branch.
#[allow(non_snake_case)]
pub fn compute_Z(cfg: &TorusConfig, phi: &ScalarField, branch: i64) -> Result<ZInvariant> {
    let z = z_value(cfg, phi);
    let modulus = z.norm();
    if modulus < 1e-12 {
        return Err(Error::ZeroInvariant { modulus });
    }
    let arg = z.arg();
    let theta_hat = BranchedAngle::new(lift_to_branch(arg, branch)?)?;
    Ok(ZInvariant {
        z,
        theta_hat,
        modulus,
    })
}

/// Raw value of `Z` without branch handling.
pub fn z_value(cfg: &TorusConfig, phi: &ScalarField) -> Complex64 {
    let spectra = eigen_field(&matrix_field(cfg, phi));
    let dens = spectra.map_points(complex_volume_density);
    quadrature_complex(cfg, &dens)
}

/// Largest relative reconstruction error `||A - Q L Q^T|| / (1 + ||A||)`
/// using a full eigendecomposition (diagnostic, not on the hot path).
pub fn reconstruction_error(field: &HermitianField) -> f64 {
    (0..field.points())
        .map(|p| {
            let a = field.matrix(p);
            let eig = a.clone().symmetric_eigen();
            let rebuilt = &eig.eigenvectors
                * DMatrix::from_diagonal(&eig.eigenvalues)
                * eig.eigenvectors.transpose();
            (&a - rebuilt).norm() / (1.0 + a.norm())
        })
        .fold(0.0, f64::max)
}
