//! JSON experiment documents and the single-run driver shared by the CLI.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bounds::{kavg_bound, theorem1_bound, theorem2_bound, theorem3_bound, BoundInputs, BoundReport};
use crate::comms::CostModel;
use crate::config::{HyperParams, ValidatedParams};
use crate::error::{Error, Result};
use crate::export::{export_run, write_bounds, BoundRow};
use crate::objectives::{EstimationOptions, Objective, ObjectiveConstants, ObjectiveSpec};
use crate::simulator::{drift_diagnostic, run_hier_avg, DriftReport, RunOptions, RunResult};

/// Starting point `w0`, shared by every worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum InitSpec {
    #[default]
    Zeros,
    Constant {
        value: f64,
    },
    Vector {
        values: Vec<f64>,
    },
    Gaussian {
        scale: f64,
        seed: u64,
    },
}

impl InitSpec {
    pub fn point(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            InitSpec::Zeros => Ok(vec![0.0; dim]),
            InitSpec::Constant { value } => Ok(vec![*value; dim]),
            InitSpec::Vector { values } => {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, actual: values.len() });
                }
                Ok(values.clone())
            }
            InitSpec::Gaussian { scale, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        scale * z
                    })
                    .collect::<Vec<f64>>())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub metric_stride: usize,
    pub record_drift: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions { metric_stride: 1, record_drift: false }
    }
}

/// Extra `(K1, K2, S)` values for the bound table. Empty lists fall back to
/// the run's own value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundGrid {
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub s: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    /// Interval of the K-step averaging baseline. The hierarchical side is the
    /// configured run, so its inflation is `K2 / k - 1`.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hyper: HyperParams,
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default)]
    pub metrics: MetricOptions,
    /// Overrides the objective's own constants when present.
    #[serde(default)]
    pub constants: Option<ObjectiveConstants>,
    #[serde(default)]
    pub estimation: EstimationOptions,
    #[serde(default)]
    pub bounds: BoundGrid,
    #[serde(default)]
    pub delta_grad_w: f64,
    #[serde(default)]
    pub compare: Option<CompareSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn run_options(&self, threads: usize) -> RunOptions {
        RunOptions {
            threads,
            metric_stride: self.metrics.metric_stride.max(1),
            record_drift: self.metrics.record_drift,
        }
    }

    pub fn constants_for(&self, objective: &Objective, w0: &[f64]) -> Result<ObjectiveConstants> {
        let c = match self.constants {
            Some(c) => c,
            None => objective.constants(w0, &self.estimation)?,
        };
        c.check()?;
        Ok(c)
    }

    /// Fixed-step bound over the `bounds` grid (empty axes take the run's own
    /// value). Combinations with `K1 > K2` or `S` not dividing `P` are skipped;
    /// rows whose step-size conditions fail are kept and flagged.
    pub fn grid_rows(&self, params: &ValidatedParams, constants: &ObjectiveConstants) -> Result<Vec<BoundRow>> {
        let base = BoundInputs::new(constants, params, self.delta_grad_w);
        let pick = |grid: &[usize], own: usize| if grid.is_empty() { vec![own] } else { grid.to_vec() };
        let mut rows = Vec::new();
        for &k2 in &pick(&self.bounds.k2, base.k2) {
            for &k1 in &pick(&self.bounds.k1, base.k1) {
                for &s in &pick(&self.bounds.s, base.group_size) {
                    if k1 == 0 || k1 > k2 || s == 0 || !base.workers.is_multiple_of(s) {
                        continue;
                    }
                    let i = BoundInputs { k1, k2, group_size: s, ..base };
                    rows.push(bound_row("fixed_step", &i, theorem2_bound(&i)?));
                }
            }
        }
        Ok(rows)
    }

    /// Bound table written next to a run: the horizon bound, the scheduled
    /// bound when the schedule changes, the grid rows and one K-step
    /// averaging row per grid `K2`.
    pub fn bound_rows(&self, params: &ValidatedParams, constants: &ObjectiveConstants) -> Result<Vec<BoundRow>> {
        let base = BoundInputs::new(constants, params, self.delta_grad_w);
        let mut rows = vec![bound_row("horizon", &base, theorem1_bound(&base, base.total_steps())?)];
        if !params.schedule().is_constant() {
            let schedule: Vec<(f64, usize)> = (1..=params.rounds()).map(|n| params.schedule().at(n)).collect();
            rows.push(bound_row("scheduled", &base, theorem3_bound(&schedule, &base)?));
        }
        rows.extend(self.grid_rows(params, constants)?);
        let k2s = if self.bounds.k2.is_empty() { vec![base.k2] } else { self.bounds.k2.clone() };
        for k2 in k2s.into_iter().filter(|&k| k > 0) {
            let i = BoundInputs { k1: k2, k2, group_size: 1, ..base };
            rows.push(bound_row("kavg", &i, kavg_bound(&i)?));
        }
        Ok(rows)
    }
}

fn bound_row(kind: &str, inputs: &BoundInputs, report: BoundReport) -> BoundRow {
    BoundRow { kind: kind.to_string(), k1: inputs.k1, k2: inputs.k2, s: inputs.group_size, report }
}

/// Everything produced by one configured run.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub params: ValidatedParams,
    pub constants: ObjectiveConstants,
    pub result: RunResult,
    pub drift: Option<DriftReport>,
    pub bounds: Vec<BoundRow>,
}

impl ExperimentOutcome {
    /// Writes `per_round.csv`, `per_step.csv`, `bounds.csv` and, with drift
    /// recording, `drift.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        export_run(dir, &self.result, self.drift.as_ref())?;
        write_bounds(std::fs::File::create(dir.join("bounds.csv"))?, &self.bounds)
    }
}

pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    let params = config.hyper.validate()?;
    let objective = config.objective.build()?;
    let w0 = config.init.point(objective.dim())?;
    let constants = config.constants_for(&objective, &w0)?;
    let result = run_hier_avg(&params, &objective, &w0, opts)?;
    let drift = if opts.record_drift {
        Some(drift_diagnostic(std::slice::from_ref(&result), &constants, &params)?)
    } else {
        None
    };
    let bounds = config.bound_rows(&params, &constants)?;
    Ok(ExperimentOutcome { params, constants, result, drift, bounds })
}
