//! Fourier differentiation on the periodic grid `[0, 2pi)^n`.
//!
//! Wave numbers follow the usual FFT ordering `0, 1, ..., N/2-1, -N/2, ..., -1`.
//! The Nyquist index is zeroed whenever an odd derivative is taken along its
//! axis, so mixed partials of real fields stay real.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned transforms and wave numbers for an `N^n` grid.
#[derive(Clone)]
pub struct SpectralGrid {
    n: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wave: Vec<f64>,
    /// Second-derivative multipliers, one table per pair `a <= b`.
    hessian_symbols: Vec<Vec<f64>>,
    /// Modes kept by the 2/3 rule.
    keep: Vec<bool>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("n", &self.n)
            .field("size", &self.size)
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(n: usize, size: usize) -> Self {
        let mut planner = FftPlanner::new();
        let size_i = size as i64;
        let wave = (0..size as i64)
            .map(|i| if i < size_i / 2 { i } else { i - size_i } as f64)
            .collect();
        let mut grid = Self {
            n,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
            wave,
            hessian_symbols: Vec::new(),
            keep: Vec::new(),
        };
        let points = grid.points();
        for a in 0..n {
            for b in a..n {
                let table = (0..points).map(|p| grid.second_derivative_symbol(p, a, b)).collect();
                grid.hessian_symbols.push(table);
            }
        }
        let cutoff = size as f64 / 3.0;
        grid.keep = (0..points)
            .map(|p| (0..n).all(|a| grid.wave[grid.axis_index(p, a)].abs() < cutoff))
            .collect();
        grid
    }

    pub fn points(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    /// Wave number of the 1-D index `i`.
    pub fn wave_number(&self, i: usize) -> f64 {
        self.wave[i]
    }

    fn stride(&self, axis: usize) -> usize {
        self.size.pow((self.n - 1 - axis) as u32)
    }

    /// Per-axis index of flat position `p`.
    pub fn axis_index(&self, p: usize, axis: usize) -> usize {
        (p / self.stride(axis)) % self.size
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let len = self.size;
        let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
        let mut line = vec![Complex64::default(); len];
        for axis in 0..self.n {
            let stride = self.stride(axis);
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = len * stride;
            for chunk in data.chunks_mut(block) {
                for inner in 0..stride {
                    for (k, slot) in line.iter_mut().enumerate() {
                        *slot = chunk[inner + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (k, v) in line.iter().enumerate() {
                        chunk[inner + k * stride] = *v;
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform of a real field.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        data
    }

    /// Inverse transform including the `1/N^n` normalization; returns the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut spectrum, &self.inverse);
        let scale = 1.0 / self.points() as f64;
        spectrum.iter().map(|c| c.re * scale).collect()
    }

    /// Fourier multiplier of `d^2 / dx_a dx_b` at flat position `p`.
    fn second_derivative_symbol(&self, p: usize, a: usize, b: usize) -> f64 {
        let ia = self.axis_index(p, a);
        let ib = self.axis_index(p, b);
        if a != b && (ia == self.size / 2 || ib == self.size / 2) {
            return 0.0;
        }
        -self.wave[ia] * self.wave[ib]
    }

    /// All second partials `d^2 phi / dx_a dx_b` for `a <= b`, in the order
    /// `(0,0), (0,1), ..., (0,n-1), (1,1), ...`.
    ///
    /// Each scaled spectrum is Hermitian, so two of them share one inverse
    /// transform as real and imaginary parts.
    pub fn hessian_components(&self, values: &[f64]) -> Vec<Vec<f64>> {
        self.hessian_components_hat(&self.forward_real(values))
    }

    /// [`Self::hessian_components`] from the unnormalized spectrum of a real field.
    pub fn hessian_components_hat(&self, hat: &[Complex64]) -> Vec<Vec<f64>> {
        let scale = 1.0 / self.points() as f64;
        let i = Complex64::new(0.0, 1.0);
        let mut out = Vec::with_capacity(self.hessian_symbols.len());
        for pair in self.hessian_symbols.chunks(2) {
            let mut packed: Vec<Complex64> = match pair {
                [s0, s1] => hat.iter().zip(s0.iter().zip(s1)).map(|(c, (x, y))| c * x + i * c * y).collect(),
                [s0] => hat.iter().zip(s0).map(|(c, x)| c * x).collect(),
                _ => unreachable!(),
            };
            self.transform(&mut packed, &self.inverse);
            out.push(packed.iter().map(|c| c.re * scale).collect());
            if pair.len() == 2 {
                out.push(packed.iter().map(|c| c.im * scale).collect());
            }
        }
        out
    }

    /// First partial `d phi / dx_a`.
    pub fn derivative(&self, values: &[f64], a: usize) -> Vec<f64> {
        let hat = self.forward_real(values);
        let scaled: Vec<Complex64> = hat
            .iter()
            .enumerate()
            .map(|(p, c)| {
                let ia = self.axis_index(p, a);
                if ia == self.size / 2 {
                    Complex64::default()
                } else {
                    c * Complex64::new(0.0, self.wave[ia])
                }
            })
            .collect();
        self.inverse_real(scaled)
    }

    /// Zeroes every mode with `|k_a| >= N/3` on some axis (2/3 rule).
    pub fn dealias(&self, values: &[f64]) -> Vec<f64> {
        let mut hat = self.forward_real(values);
        self.project(&mut hat);
        self.inverse_real(hat)
    }

    /// [`Self::dealias`] in spectral space.
    pub fn project(&self, hat: &mut [Complex64]) {
        for (c, &keep) in hat.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }
}
