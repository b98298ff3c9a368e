//! Initial potentials from a list of Fourier modes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::BranchedAngle;
use crate::torus::{eigen_field, matrix_field, ScalarField, TorusConfig};

/// One term `amplitude * cos(k . x - phase_shift)`; a phase shift of `pi/2`
/// gives a sine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub frequency: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_shift: f64,
}

impl Mode {
    pub fn cos(frequency: Vec<i64>, amplitude: f64) -> Self {
        Self {
            frequency,
            amplitude,
            phase_shift: 0.0,
        }
    }

    pub fn sin(frequency: Vec<i64>, amplitude: f64) -> Self {
        Self {
            frequency,
            amplitude,
            phase_shift: std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Sums the modes on the grid. Frequencies must fit under the 2/3 de-aliasing
/// cutoff so the first step does not silently truncate them.
pub fn build_potential(cfg: &TorusConfig, modes: &[Mode]) -> Result<ScalarField> {
    let cutoff = cfg.grid() as f64 / 3.0;
    for m in modes {
        if m.frequency.len() != cfg.n() {
            return Err(Error::DimensionMismatch {
                expected: cfg.n(),
                found: m.frequency.len(),
            });
        }
        if m.frequency.iter().any(|&k| (k as f64).abs() >= cutoff) {
            return Err(Error::InvalidParameter(format!(
                "mode {:?} is not resolved below the de-aliasing cutoff N/3",
                m.frequency
            )));
        }
        if !m.amplitude.is_finite() || !m.phase_shift.is_finite() {
            return Err(Error::NonFinite);
        }
    }
    Ok(ScalarField::from_fn(cfg, |x| {
        modes
            .iter()
            .map(|m| {
                let phase: f64 = m.frequency.iter().zip(x).map(|(&k, xi)| k as f64 * xi).sum();
                m.amplitude * (phase - m.phase_shift).cos()
            })
            .sum()
    }))
}

/// Grid points where `|Theta - theta_hat| >= pi/2`.
pub fn uncalibrated_points(cfg: &TorusConfig, phi: &ScalarField, th: &BranchedAngle) -> Vec<usize> {
    let spectra = eigen_field(&matrix_field(cfg, phi));
    spectra
        .map_points(|l| {
            let t: f64 = l.iter().map(|v| v.atan()).sum();
            (t - th.theta_hat()).abs() < std::f64::consts::FRAC_PI_2
        })
        .into_iter()
        .enumerate()
        .filter_map(|(p, ok)| (!ok).then_some(p))
        .collect()
}

/// [`build_potential`] followed by the almost-calibrated check.
pub fn initial_potential(cfg: &TorusConfig, modes: &[Mode], th: &BranchedAngle) -> Result<ScalarField> {
    let phi = build_potential(cfg, modes)?;
    let bad = uncalibrated_points(cfg, &phi, th);
    if bad.is_empty() {
        Ok(phi)
    } else {
        Err(Error::NotAlmostCalibrated { points: bad })
    }
}
