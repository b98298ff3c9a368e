//! Field snapshots: a JSON header next to a flat little-endian `f64` payload.
//!
//! `<stem>.json` holds [`SnapshotHeader`]; `<stem>.bin` holds `N^n` values in
//! row-major order (last axis fastest), 8 bytes each.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ScalarField, TorusConfig};
use crate::error::{Error, Result};

pub const LAYOUT: &str = "row-major f64 little-endian";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub grid: usize,
    /// Row-major `B`.
    #[serde(rename = "B")]
    pub b: Vec<f64>,
    pub time: f64,
    pub layout: String,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub field: ScalarField,
}

impl Snapshot {
    pub fn config(&self) -> Result<TorusConfig> {
        TorusConfig::new(self.header.n, self.header.grid, &self.header.b)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` and `<stem>.bin`; returns both paths.
pub fn write_snapshot(
    stem: &Path,
    cfg: &TorusConfig,
    field: &ScalarField,
    time: f64,
) -> Result<(PathBuf, PathBuf)> {
    let (json, bin) = paths(stem);
    let header = SnapshotHeader {
        n: cfg.n(),
        grid: cfg.grid(),
        b: cfg.b().transpose().iter().copied().collect(),
        time,
        layout: LAYOUT.to_string(),
        payload: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let bytes: Vec<u8> = field.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes)?;
    fs::write(&json, serde_json::to_string_pretty(&header)?)?;
    Ok((json, bin))
}

/// Reads a snapshot given either stem or the `.json` header path.
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let (json, _) = paths(path);
    let header: SnapshotHeader = serde_json::from_str(&fs::read_to_string(&json)?)?;
    let bin = json.with_file_name(&header.payload);
    let bytes = fs::read(&bin)?;
    let expected = header.grid.pow(header.n as u32);
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch {
            expected: expected * 8,
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(Snapshot {
        header,
        field: ScalarField { values },
    })
}
