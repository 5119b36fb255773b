//! Per-epoch training trace and its CSV / JSON encodings.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_HEADER: &str =
    "epoch,wall_s,duality_gap,suboptimality,updates_A,coverage_A,updates_B,mode";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    /// Cumulative solve time, excluding certificate evaluation.
    pub wall_s: f64,
    /// Global duality gap, present on evaluation epochs.
    pub duality_gap: Option<f64>,
    pub suboptimality: Option<f64>,
    #[serde(rename = "updates_A")]
    pub updates_a: u64,
    #[serde(rename = "coverage_A")]
    pub coverage_a: f64,
    #[serde(rename = "updates_B")]
    pub updates_b: u64,
    pub mode: String,
    /// Objective after the epoch (present on evaluation epochs).
    #[serde(skip)]
    pub objective: Option<f64>,
    /// `||v - D alpha||_inf` after the epoch, when consistency checks are on.
    #[serde(skip)]
    pub consistency: Option<f64>,
    /// Coordinates that entered the batch this epoch.
    #[serde(skip)]
    pub churn: usize,
}

impl TraceRow {
    /// Equality of everything except timings.
    pub fn same_trajectory(&self, other: &TraceRow) -> bool {
        let bits = |x: Option<f64>| x.map(f64::to_bits);
        self.epoch == other.epoch
            && bits(self.duality_gap) == bits(other.duality_gap)
            && bits(self.objective) == bits(other.objective)
            && self.updates_a == other.updates_a
            && self.updates_b == other.updates_b
            && self.mode == other.mode
            && self.churn == other.churn
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(out: &mut W, rows: &[TraceRow], header: bool) -> Result<()> {
    if header {
        writeln!(out, "{CSV_HEADER}")?;
    }
    for r in rows {
        writeln!(
            out,
            "{},{:.6},{},{},{},{:.6},{},{}",
            r.epoch,
            r.wall_s,
            opt(r.duality_gap),
            opt(r.suboptimality),
            r.updates_a,
            r.coverage_a,
            r.updates_b,
            r.mode
        )?;
    }
    Ok(())
}
