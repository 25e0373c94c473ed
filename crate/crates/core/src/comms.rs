//! Reduction counting and a latency/bandwidth model of their cost.

use serde::{Deserialize, Serialize};

use crate::bounds::{compare_with_kavg, BoundInputs, ComparisonReport};
use crate::config::ValidatedParams;
use crate::error::{Error, Result};

const BYTES_PER_VALUE: u64 = 8;

/// Reductions performed by a run. A local reduction is one round of
/// in-group averages (all groups at once); a global reduction averages all `P`
/// workers. Every participant ships its `d` parameters, so both kinds move
/// `8 d P` bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub n_local_reductions: u64,
    pub n_global_reductions: u64,
    pub bytes_local: u64,
    pub bytes_global: u64,
    pub workers: usize,
    pub group_size: usize,
    pub dim: usize,
}

impl CommLedger {
    pub fn new(workers: usize, group_size: usize, dim: usize) -> Self {
        CommLedger {
            n_local_reductions: 0,
            n_global_reductions: 0,
            bytes_local: 0,
            bytes_global: 0,
            workers,
            group_size,
            dim,
        }
    }

    fn bytes_per_reduction(&self) -> u64 {
        self.dim as u64 * BYTES_PER_VALUE * self.workers as u64
    }

    pub fn record_local(&mut self) {
        self.n_local_reductions += 1;
        self.bytes_local += self.bytes_per_reduction();
    }

    pub fn record_global(&mut self) {
        self.n_global_reductions += 1;
        self.bytes_global += self.bytes_per_reduction();
    }
}

/// Affine per-reduction cost, `latency + per_byte * 8 d`, for each level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub local_latency: f64,
    pub local_per_byte: f64,
    pub global_latency: f64,
    pub global_per_byte: f64,
}

impl Default for CostModel {
    /// 50 us + 50 GB/s inside a node, 500 us + 5 GB/s across nodes.
    fn default() -> Self {
        CostModel {
            local_latency: 50e-6,
            local_per_byte: 1.0 / 50e9,
            global_latency: 500e-6,
            global_per_byte: 1.0 / 5e9,
        }
    }
}

impl CostModel {
    /// Fixed cost per reduction regardless of size.
    pub fn constant(t_local: f64, t_global: f64) -> Self {
        CostModel { local_latency: t_local, local_per_byte: 0.0, global_latency: t_global, global_per_byte: 0.0 }
    }

    pub fn zero() -> Self {
        CostModel::constant(0.0, 0.0)
    }

    pub fn check(&self) -> Result<()> {
        let all = [self.local_latency, self.local_per_byte, self.global_latency, self.global_per_byte];
        if all.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidCostModel(format!("coefficients must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    /// Seconds for one in-group reduction of a `d`-vector.
    pub fn t_local(&self, dim: usize) -> f64 {
        self.local_latency + self.local_per_byte * (dim as u64 * BYTES_PER_VALUE) as f64
    }

    /// Seconds for one global reduction of a `d`-vector.
    pub fn t_global(&self, dim: usize) -> f64 {
        self.global_latency + self.global_per_byte * (dim as u64 * BYTES_PER_VALUE) as f64
    }
}

/// Closed-form reduction counts: `N` global and `N * beta` local, minus one
/// local per round when the redundant last local average is elided.
pub fn count_reductions(params: &ValidatedParams) -> CommLedger {
    let mut ledger = CommLedger::new(params.workers(), params.group_size(), params.dim());
    let n = params.rounds() as u64;
    let beta = params.beta() as u64;
    let locals = if params.elides_redundant_local_avg() { n * (beta - 1) } else { n * beta };
    let per = ledger.bytes_per_reduction();
    ledger.n_local_reductions = locals;
    ledger.n_global_reductions = n;
    ledger.bytes_local = locals * per;
    ledger.bytes_global = n * per;
    ledger
}

/// `n_local * t_local(d) + n_global * t_global(d)`. Averaging over singleton
/// groups moves no data, so local reductions are free when `S = 1`.
pub fn modeled_time(ledger: &CommLedger, model: &CostModel, dim: usize) -> f64 {
    let local = if ledger.group_size > 1 { ledger.n_local_reductions as f64 * model.t_local(dim) } else { 0.0 };
    local + ledger.n_global_reductions as f64 * model.t_global(dim)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffReport {
    pub total_steps: u64,
    pub hier: CommLedger,
    pub kavg: CommLedger,
    pub hier_time: f64,
    pub kavg_time: f64,
    /// `t_global / t_local` at which both configurations cost the same:
    /// `(nL_hier - nL_kavg) / (nG_kavg - nG_hier)`. `None` when the global
    /// counts coincide.
    pub crossover_ratio: Option<f64>,
    pub comparison: Option<ComparisonReport>,
}

/// Side-by-side cost of a hierarchical configuration and a K-step averaging
/// one over the same number of steps. With `bound_inputs` the bound
/// comparison for `K = kavg.K2`, `a = hier.K2 / K - 1` is attached.
pub fn comm_tradeoff_report(
    hier: &ValidatedParams,
    kavg: &ValidatedParams,
    model: &CostModel,
    dim: usize,
    bound_inputs: Option<&BoundInputs>,
) -> Result<TradeoffReport> {
    model.check()?;
    if hier.total_steps() != kavg.total_steps() {
        return Err(Error::MismatchedBudget { left: hier.total_steps(), right: kavg.total_steps() });
    }
    let h = count_reductions(hier);
    let k = count_reductions(kavg);
    let local = |l: &CommLedger| {
        if l.group_size > 1 {
            l.n_local_reductions as f64
        } else {
            0.0
        }
    };
    let dg = k.n_global_reductions as f64 - h.n_global_reductions as f64;
    let crossover_ratio = (dg != 0.0).then(|| (local(&h) - local(&k)) / dg);
    let comparison = match bound_inputs {
        Some(inputs) => {
            let inflation = hier.k2() as f64 / kavg.k2() as f64 - 1.0;
            let inputs = BoundInputs { rounds: hier.rounds(), k2: hier.k2(), ..*inputs };
            Some(compare_with_kavg(&inputs, kavg.k2(), inflation)?)
        }
        None => None,
    };
    Ok(TradeoffReport {
        total_steps: hier.total_steps(),
        hier_time: modeled_time(&h, model, dim),
        kavg_time: modeled_time(&k, model, dim),
        hier: h,
        kavg: k,
        crossover_ratio,
        comparison,
    })
}
