use std::collections::HashMap;

use serde::Serialize;

use super::RunResult;
use crate::config::ValidatedParams;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveConstants;

/// Drift at one in-round offset `o = K1 * eta + t`, averaged over workers,
/// rounds and runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftRow {
    pub eta: usize,
    pub t: usize,
    pub offset: usize,
    pub measured: f64,
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violated).count()
    }

    pub fn violation_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.violations() as f64 / self.rows.len() as f64
    }
}

/// Compares recorded drift `E ||w^j - w_tilde_n||^2` with its bound
///
/// `(gamma^2 M / B) o (t + K1 eta / S) + gamma^2 o sum_{k=0..=o} E ||grad F(w^j_k)||^2`
///
/// where the gradient terms are the measured worker means of the same round.
/// Bound and measurement are both averaged over every round of every run.
pub fn drift_diagnostic(
    results: &[RunResult],
    constants: &ObjectiveConstants,
    params: &ValidatedParams,
) -> Result<DriftReport> {
    let k1 = params.k1();
    let k2 = params.k2();
    let s = params.group_size() as f64;
    let mut measured = vec![0.0; k2];
    let mut bound = vec![0.0; k2];
    let mut count = 0usize;

    for result in results {
        let series = result.metrics.drift.as_ref().ok_or(Error::MissingDriftSeries)?;
        let by_key: HashMap<(usize, usize), usize> =
            series.iter().enumerate().map(|(i, d)| ((d.round, d.offset), i)).collect();
        for round in 1..=params.rounds() {
            let (gamma, batch) = params.schedule().at(round);
            let g2 = gamma * gamma;
            let mut grad_sum = 0.0;
            for o in 0..k2 {
                let sample = by_key.get(&(round, o)).map(|&i| &series[i]).ok_or(Error::MissingDriftSeries)?;
                grad_sum += sample.mean_grad_norm_sq;
                let (eta, t) = (o / k1, o % k1);
                let of = o as f64;
                let noise = g2 * constants.variance / batch as f64 * of * (t as f64 + (k1 * eta) as f64 / s);
                measured[o] += sample.mean_sq_drift;
                bound[o] += noise + g2 * of * grad_sum;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::MissingDriftSeries);
    }

    let c = count as f64;
    let rows = (0..k2)
        .map(|o| {
            let (m, b) = (measured[o] / c, bound[o] / c);
            DriftRow { eta: o / k1, t: o % k1, offset: o, measured: m, bound: b, violated: m > b }
        })
        .collect();
    Ok(DriftReport { rows })
}
