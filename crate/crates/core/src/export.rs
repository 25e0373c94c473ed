//! CSV output. Floats are written as `{:.16e}` so files round-trip exactly
//! and identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::bounds::BoundReport;
use crate::error::Result;
use crate::simulator::{DriftReport, RunResult, TrajectoryMetrics};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_per_round<W: Write>(out: W, metrics: &TrajectoryMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "grad_norm_sq", "loss", "n_local_reductions", "n_global_reductions"])?;
    for r in &metrics.per_round {
        w.write_record([
            r.round.to_string(),
            fmt_f64(r.grad_norm_sq),
            fmt_f64(r.loss),
            r.n_local_reductions.to_string(),
            r.n_global_reductions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_per_step<W: Write>(out: W, metrics: &TrajectoryMetrics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "grad_norm_sq"])?;
    for s in &metrics.per_step {
        w.write_record([s.step.to_string(), fmt_f64(s.grad_norm_sq)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_drift<W: Write>(out: W, report: &DriftReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eta", "t", "measured", "bound"])?;
    for r in &report.rows {
        w.write_record([r.eta.to_string(), r.t.to_string(), fmt_f64(r.measured), fmt_f64(r.bound)])?;
    }
    w.flush()?;
    Ok(())
}

/// One line of a bound table. `kind` is one of `horizon`, `fixed_step`,
/// `scheduled` or `kavg`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub kind: String,
    pub k1: usize,
    pub k2: usize,
    pub s: usize,
    pub report: BoundReport,
}

pub fn write_bounds<W: Write>(out: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["K1", "K2", "S", "bound_value", "term1", "term2", "term3", "condition_ok", "bound"])?;
    for r in rows {
        w.write_record([
            r.k1.to_string(),
            r.k2.to_string(),
            r.s.to_string(),
            fmt_f64(r.report.value),
            fmt_f64(r.report.terms[0]),
            fmt_f64(r.report.terms[1]),
            fmt_f64(r.report.terms[2]),
            r.report.conditions_ok().to_string(),
            r.kind.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `per_round.csv`, `per_step.csv` and, when given, `drift.csv` into `dir`.
pub fn export_run(dir: &Path, result: &RunResult, drift: Option<&DriftReport>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_per_round(fs::File::create(dir.join("per_round.csv"))?, &result.metrics)?;
    write_per_step(fs::File::create(dir.join("per_step.csv"))?, &result.metrics)?;
    if let Some(report) = drift {
        write_drift(fs::File::create(dir.join("drift.csv"))?, report)?;
    }
    Ok(())
}
