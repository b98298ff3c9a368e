//! JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use dhym::flow::{Mode, RunOptions, Scheme};
use dhym::torus::TorusConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One Fourier term. `phase_shift` may be omitted (cosine).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub frequency: Vec<i64>,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_shift: Option<f64>,
}

impl ModeSpec {
    pub fn to_mode(&self) -> Mode {
        Mode {
            frequency: self.frequency.clone(),
            amplitude: self.amplitude,
            phase_shift: self.phase_shift.unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid: usize,
    /// Row-major `B`.
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    /// Defaults to `n`, the top branch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_hat_branch: Option<i64>,
    pub initial_modes: Vec<ModeSpec>,
    pub scheme: Scheme,
    pub stop_tol: f64,
    pub t_max: f64,
    pub safety: f64,
    pub seed: u64,
    pub record_every: u64,
    pub output_dir: PathBuf,
    /// Write a field snapshot every this many steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n >= 1, "n must be >= 1");
        ensure!(self.b.len() == self.n * self.n, "B needs n^2 = {} entries, got {}", self.n * self.n, self.b.len());
        ensure!(self.b.iter().all(|v| v.is_finite()), "B must be finite");
        ensure!(self.stop_tol > 0.0 && self.stop_tol.is_finite(), "stop_tol must be positive");
        ensure!(self.t_max >= 0.0 && self.t_max.is_finite(), "t_max must be finite and >= 0");
        ensure!(self.safety > 0.0 && self.safety.is_finite(), "safety must be positive");
        ensure!(self.record_every >= 1, "record_every must be >= 1");
        if self.snapshot_every == Some(0) {
            bail!("snapshot_every must be >= 1");
        }
        for m in &self.initial_modes {
            ensure!(m.frequency.len() == self.n, "mode {:?} has the wrong dimension", m.frequency);
            ensure!(m.amplitude.is_finite() && m.phase_shift.unwrap_or(0.0).is_finite(), "mode {:?} is not finite", m.frequency);
        }
        self.torus()?;
        Ok(())
    }

    pub fn torus(&self) -> Result<TorusConfig> {
        Ok(TorusConfig::new(self.n, self.grid, &self.b)?)
    }

    pub fn branch(&self) -> i64 {
        self.theta_hat_branch.unwrap_or(self.n as i64)
    }

    pub fn modes(&self) -> Vec<Mode> {
        self.initial_modes.iter().map(ModeSpec::to_mode).collect()
    }

    pub fn options(&self, scheme: Scheme) -> RunOptions {
        RunOptions {
            scheme,
            stop_tol: self.stop_tol,
            t_max: self.t_max,
            safety: self.safety,
            record_every: self.record_every,
            fixed_dt: None,
        }
    }

    /// SHA-256 of the canonical serialization, so key order and whitespace
    /// in the file do not matter.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
