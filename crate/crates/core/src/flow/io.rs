//! Trajectory CSV and summary JSON writers.

use std::io::Write;

use super::{DiagnosticsRow, RunSummary};
use crate::error::Result;

pub const CSV_HEADER: &str = "t,C,J,V,residual,theta_min,theta_max,margin,z_drift";

/// One line per row, every number with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[DiagnosticsRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        let cols = [r.t, r.c_val, r.j_val, r.v_val, r.residual, r.theta_min, r.theta_max, r.margin, r.z_drift];
        let line: Vec<String> = cols.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn write_summary_json<W: Write>(mut w: W, summary: &RunSummary) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w)?;
    Ok(())
}
