use serde::Serialize;

use super::RunOptions;
use crate::comms::CommLedger;
use crate::objectives::StochasticObjective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetric {
    /// 0-based global step index `t`; the value is `||grad F(w_bar_t)||^2`.
    pub step: u64,
    pub grad_norm_sq: f64,
}

/// Row `round = n` describes the synchronized point at the start of round `n`
/// (`w_tilde_1 = w0`). Reduction counts are cumulative through the end of round `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundMetric {
    pub round: usize,
    pub grad_norm_sq: f64,
    pub loss: f64,
    pub n_local_reductions: u64,
    pub n_global_reductions: u64,
}

/// Spread of the workers around the round's synchronized point at one offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSample {
    pub round: usize,
    /// Steps since the round's global average, `0..K2`.
    pub offset: usize,
    /// `mean_j ||w^j - w_tilde||^2`.
    pub mean_sq_drift: f64,
    pub max_sq_drift: f64,
    /// `mean_j ||grad F(w^j)||^2`.
    pub mean_grad_norm_sq: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrajectoryMetrics {
    pub per_step: Vec<StepMetric>,
    pub per_round: Vec<RoundMetric>,
    pub drift: Option<Vec<DriftSample>>,
}

impl TrajectoryMetrics {
    /// `1/|S| sum_{t in S} ||grad F(w_bar_t)||^2` over the recorded steps.
    pub fn mean_step_grad_norm_sq(&self) -> Option<f64> {
        if self.per_step.is_empty() {
            return None;
        }
        Some(self.per_step.iter().map(|m| m.grad_norm_sq).sum::<f64>() / self.per_step.len() as f64)
    }

    /// Mean of `||grad F(w_tilde_n)||^2` over rounds.
    pub fn mean_round_grad_norm_sq(&self) -> Option<f64> {
        if self.per_round.is_empty() {
            return None;
        }
        Some(self.per_round.iter().map(|m| m.grad_norm_sq).sum::<f64>() / self.per_round.len() as f64)
    }
}

/// Observations shared by the engine and the reference loop.
pub(crate) struct Collector<'a> {
    objective: &'a dyn StochasticObjective,
    stride: u64,
    record_drift: bool,
    grad: Vec<f64>,
    metrics: TrajectoryMetrics,
}

impl<'a> Collector<'a> {
    pub(crate) fn new(objective: &'a dyn StochasticObjective, opts: &RunOptions) -> Self {
        Collector {
            objective,
            stride: opts.metric_stride.max(1) as u64,
            record_drift: opts.record_drift,
            grad: vec![0.0; objective.dim()],
            metrics: TrajectoryMetrics { drift: opts.record_drift.then(Vec::new), ..Default::default() },
        }
    }

    fn records_step(&self, t: u64) -> bool {
        t.is_multiple_of(self.stride)
    }

    /// Whether the state after global step `t` has to be looked at.
    pub(crate) fn wants(&self, t: u64) -> bool {
        self.record_drift || self.records_step(t)
    }

    fn grad_norm_sq(&mut self, w: &[f64]) -> f64 {
        self.objective.gradient_into(w, &mut self.grad);
        self.grad.iter().map(|g| g * g).sum()
    }

    /// Records round `n`'s starting point, which is also step `(n-1) K2`.
    pub(crate) fn round_start(&mut self, round: usize, clock: u64, synchronized: &[f64]) {
        let g = self.grad_norm_sq(synchronized);
        let loss = self.objective.loss(synchronized);
        self.metrics.per_round.push(RoundMetric {
            round,
            grad_norm_sq: g,
            loss,
            n_local_reductions: 0,
            n_global_reductions: 0,
        });
        if self.records_step(clock) {
            self.metrics.per_step.push(StepMetric { step: clock, grad_norm_sq: g });
        }
        if let Some(drift) = self.metrics.drift.as_mut() {
            drift.push(DriftSample { round, offset: 0, mean_sq_drift: 0.0, max_sq_drift: 0.0, mean_grad_norm_sq: g });
        }
    }

    /// Records step `t = round start + offset` from the workers' current parameters.
    pub(crate) fn observe(&mut self, round: usize, t: u64, offset: usize, states: &[&[f64]], synchronized: &[f64]) {
        if self.records_step(t) {
            let mean = super::ordered_mean(states.iter().copied());
            let g = self.grad_norm_sq(&mean);
            self.metrics.per_step.push(StepMetric { step: t, grad_norm_sq: g });
        }
        if self.record_drift {
            let mut sum_drift = 0.0;
            let mut max_drift: f64 = 0.0;
            let mut sum_grad = 0.0;
            for w in states {
                let d: f64 = w.iter().zip(synchronized).map(|(a, b)| (a - b) * (a - b)).sum();
                sum_drift += d;
                max_drift = max_drift.max(d);
                sum_grad += self.grad_norm_sq(w);
            }
            let p = states.len() as f64;
            self.metrics.drift.as_mut().expect("drift enabled").push(DriftSample {
                round,
                offset,
                mean_sq_drift: sum_drift / p,
                max_sq_drift: max_drift,
                mean_grad_norm_sq: sum_grad / p,
            });
        }
    }

    pub(crate) fn round_end(&mut self, ledger: &CommLedger) {
        let row = self.metrics.per_round.last_mut().expect("round started");
        row.n_local_reductions = ledger.n_local_reductions;
        row.n_global_reductions = ledger.n_global_reductions;
    }

    pub(crate) fn finish(self) -> TrajectoryMetrics {
        self.metrics
    }
}
