//! Execution of hierarchical averaging SGD over simulated workers.
//!
//! Workers run local SGD, average within their group every `K1` steps and
//! average globally every `K2` steps. All sample draws are addressed by
//! [`SampleKey`] and every reduction sums in ascending worker index, so the
//! parallel engine ([`run_hier_avg`]) and the single-threaded reference
//! ([`sequential_oracle`]) produce bitwise-identical results.

mod drift;
mod engine;
mod metrics;
mod oracle;

use serde::Serialize;

use crate::comms::CommLedger;
use crate::error::{Error, Result};
use crate::objectives::{Objective, StochasticObjective};
use crate::rng::SampleKey;

pub use drift::{drift_diagnostic, DriftReport, DriftRow};
pub use engine::{run_hier_avg, run_hier_avg_observed};
pub use metrics::{DriftSample, RoundMetric, StepMetric, TrajectoryMetrics};
pub use oracle::sequential_oracle;

/// One learner's parameter copy.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub index: usize,
    pub params: Vec<f64>,
    pub steps_taken: u64,
}

impl WorkerState {
    pub fn new(index: usize, params: Vec<f64>) -> Self {
        WorkerState { index, params, steps_taken: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads used inside local segments; 1 runs inline.
    pub threads: usize,
    /// Record `||grad F(w_bar_t)||^2` only for steps with `t % metric_stride == 0`.
    pub metric_stride: usize,
    /// Record per-step parameter drift from the last synchronized point.
    pub record_drift: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1, metric_stride: 1, record_drift: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    /// Parameters after the last global average.
    pub final_params: Vec<f64>,
    pub final_loss: f64,
    pub final_grad_norm_sq: f64,
    pub metrics: TrajectoryMetrics,
    pub ledger: CommLedger,
    /// `T = N * K2`.
    pub total_steps: u64,
}

/// Hooks into the reductions of a run. Used by tests to check invariants that
/// are not part of the recorded metrics.
pub trait RunObserver {
    /// Return true to receive [`RunObserver::on_local_average`]; the engine
    /// snapshots all workers before each local average only in that case.
    fn observes_local_averages(&self) -> bool {
        false
    }

    fn on_local_average(&mut self, _round: usize, _block: usize, _before: &[WorkerState], _after: &[WorkerState]) {}

    fn on_global_average(&mut self, _round: usize, _synchronized: &[f64], _workers: &[WorkerState]) {}
}

impl RunObserver for () {}

/// One SGD step: `w -= gamma/B * sum_s g(w; key(worker, step, s))`, all
/// samples evaluated at the pre-step `w`.
pub(crate) fn sgd_step(
    objective: &dyn StochasticObjective,
    w: &mut [f64],
    grad: &mut [f64],
    gamma: f64,
    batch: usize,
    seed: u64,
    worker: usize,
    step: u64,
) {
    grad.fill(0.0);
    for s in 0..batch {
        objective.add_sample_gradient(w, SampleKey::new(seed, worker, step, s), grad);
    }
    let coef = gamma / batch as f64;
    for (wi, gi) in w.iter_mut().zip(grad.iter()) {
        *wi -= coef * gi;
    }
}

/// Runs `steps` consecutive local SGD steps on one worker. `clock` is the
/// global index of the first step and selects the sample keys.
#[allow(clippy::too_many_arguments)]
pub fn local_sgd_segment(
    worker: &mut WorkerState,
    objective: &Objective,
    gamma: f64,
    batch: usize,
    steps: usize,
    clock: u64,
    seed: u64,
) -> Result<()> {
    objective.check_dim(&worker.params)?;
    run_segment(worker, objective.as_dyn(), gamma, batch, steps, clock, seed);
    Ok(())
}

pub(crate) fn run_segment(
    worker: &mut WorkerState,
    objective: &dyn StochasticObjective,
    gamma: f64,
    batch: usize,
    steps: usize,
    clock: u64,
    seed: u64,
) {
    let mut grad = vec![0.0; worker.params.len()];
    for k in 0..steps as u64 {
        sgd_step(objective, &mut worker.params, &mut grad, gamma, batch, seed, worker.index, clock + k);
    }
    worker.steps_taken += steps as u64;
}

/// `sum_j v_j / n`, summed in slice order starting from the first element.
pub(crate) fn ordered_mean<'a, I>(mut vectors: I) -> Vec<f64>
where
    I: Iterator<Item = &'a [f64]>,
{
    let first = vectors.next().expect("mean of at least one vector");
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    sum
}

/// Replaces every member's parameters by the group mean.
pub fn local_average(group: &mut [WorkerState]) -> Result<()> {
    let first = group.first().ok_or(Error::EmptyGroup)?;
    let d = first.params.len();
    if let Some(w) = group.iter().find(|w| w.params.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: w.params.len() });
    }
    let mean = ordered_mean(group.iter().map(|w| w.params.as_slice()));
    for w in group.iter_mut() {
        w.params.copy_from_slice(&mean);
    }
    Ok(())
}

/// Averages all workers, synchronizes them, and returns the average.
pub fn global_average(workers: &mut [WorkerState]) -> Result<Vec<f64>> {
    let first = workers.first().ok_or(Error::EmptyGroup)?;
    let d = first.params.len();
    if let Some(w) = workers.iter().find(|w| w.params.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: w.params.len() });
    }
    let mean = ordered_mean(workers.iter().map(|w| w.params.as_slice()));
    for w in workers.iter_mut() {
        w.params.copy_from_slice(&mean);
    }
    Ok(mean)
}

pub(crate) fn check_run_inputs(
    params: &crate::config::ValidatedParams,
    objective: &Objective,
    w0: &[f64],
) -> Result<()> {
    objective.check_dim(w0)?;
    if params.dim() != objective.dim() {
        return Err(Error::DimensionMismatch { expected: objective.dim(), actual: params.dim() });
    }
    Ok(())
}
