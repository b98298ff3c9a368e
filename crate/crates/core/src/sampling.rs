//! Random points on phase level sets and on the calibrated strip.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Cauchy, Distribution};

use crate::phase::{level_set_solve, Spectrum};

/// Clip applied to the heavy-tailed coordinate draws.
pub const CAUCHY_CLIP: f64 = 1e3;
/// Distance kept from the ends of the sampled phase interval.
pub const STRIP_EPS: f64 = 1e-3;

/// Draws spectra on `{theta = sigma}`: `n-1` clipped standard-Cauchy
/// coordinates, the last one solved for. Infeasible draws are retried.
#[derive(Debug, Clone, Copy)]
pub struct LevelSetSampler {
    n: usize,
    cauchy: Cauchy<f64>,
}

impl LevelSetSampler {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        Self {
            n,
            cauchy: Cauchy::new(0.0, 1.0).expect("unit Cauchy"),
        }
    }

    /// One attempt; `None` when the solved coordinate is infeasible.
    pub fn try_sample<R: Rng + ?Sized>(&self, rng: &mut R, sigma: f64) -> Option<Spectrum> {
        let mut partial: Vec<f64> = (0..self.n - 1)
            .map(|_| self.cauchy.sample(rng).clamp(-CAUCHY_CLIP, CAUCHY_CLIP))
            .collect();
        let last = level_set_solve(&partial, sigma)?;
        if !last.is_finite() {
            return None;
        }
        partial.push(last);
        Spectrum::new(partial).ok()
    }

    /// Retries until success or `max_tries` attempts.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        sigma: f64,
        max_tries: usize,
    ) -> Option<Spectrum> {
        (0..max_tries).find_map(|_| self.try_sample(rng, sigma))
    }
}

/// Phase interval `(theta_hat - pi/2 + eps, min(theta_hat + pi/2, n pi/2) - eps)`
/// that the strip sampler draws from.
pub fn strip_phase_interval(n: usize, theta_hat: f64) -> (f64, f64) {
    let lo = theta_hat - FRAC_PI_2 + STRIP_EPS;
    let hi = (theta_hat + FRAC_PI_2).min(n as f64 * FRAC_PI_2) - STRIP_EPS;
    (lo.max(-(n as f64) * FRAC_PI_2 + STRIP_EPS), hi)
}

/// Sampler for the calibrated strip around `theta_hat`.
#[derive(Debug, Clone, Copy)]
pub struct StripSampler {
    level: LevelSetSampler,
    lo: f64,
    hi: f64,
}

impl StripSampler {
    pub fn new(n: usize, theta_hat: f64) -> Self {
        let (lo, hi) = strip_phase_interval(n, theta_hat);
        Self {
            level: LevelSetSampler::new(n),
            lo,
            hi,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Draws a phase uniformly in the interval then a point on its level set.
    /// Infeasible draws are rejected and redrawn (phase included).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Spectrum {
        loop {
            let sigma = rng.random_range(self.lo..self.hi);
            if let Some(s) = self.level.try_sample(rng, sigma) {
                return s;
            }
        }
    }
}
