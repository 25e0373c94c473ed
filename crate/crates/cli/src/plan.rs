//! Sweep plans: a base config plus value lists for some hyperparameters.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hieravg_core::{Breakpoint, ExperimentConfig};
use serde::Deserialize;

pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Empty lists keep the base config's value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub k1: Vec<usize>,
    pub k2: Vec<usize>,
    pub group_size: Vec<usize>,
    pub workers: Vec<usize>,
    pub gamma: Vec<f64>,
    pub batch: Vec<usize>,
    pub seed: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Either an inline config or the path of one, relative to the plan file.
    pub base: serde_json::Value,
    #[serde(default)]
    pub axes: SweepAxes,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_cap")]
    pub max_runs: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_cap() -> usize {
    DEFAULT_MAX_RUNS
}

/// Swept values of one grid point, as reported in the summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointKey {
    pub k1: usize,
    pub k2: usize,
    pub group_size: usize,
    pub workers: usize,
    pub gamma: f64,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub key: PointKey,
    pub config: ExperimentConfig,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<(Self, ExperimentConfig)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading plan {}", path.display()))?;
        let plan: ExperimentPlan =
            serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?;
        let base = plan.base_config(path.parent().unwrap_or(Path::new(".")))?;
        Ok((plan, base))
    }

    pub fn base_config(&self, plan_dir: &Path) -> Result<ExperimentConfig> {
        match &self.base {
            serde_json::Value::String(rel) => {
                let full = plan_dir.join(rel);
                ExperimentConfig::load(&full).with_context(|| format!("loading base config {}", full.display()))
            }
            inline => serde_json::from_value(inline.clone()).context("parsing inline base config"),
        }
    }

    /// Cartesian product of the axes in the order K1, K2, S, P, gamma, B,
    /// seed (seed varies fastest). Points are not validated here.
    pub fn expand(&self, base: &ExperimentConfig, replicates: usize) -> Result<Vec<SweepPoint>> {
        let a = &self.axes;
        let h = &base.hyper;
        let gamma0 = h.gamma_schedule.first().map_or(f64::NAN, |b| b.value);
        let batch0 = h.batch_schedule.first().map_or(0, |b| b.value);
        let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
        let k1s = or(&a.k1, h.k1);
        let k2s = or(&a.k2, h.k2);
        let ss = or(&a.group_size, h.group_size);
        let ps = or(&a.workers, h.workers);
        let bs = or(&a.batch, batch0);
        let gammas = if a.gamma.is_empty() { vec![gamma0] } else { a.gamma.clone() };
        let seeds = if a.seed.is_empty() { vec![h.seed] } else { a.seed.clone() };

        let points = [k1s.len(), k2s.len(), ss.len(), ps.len(), gammas.len(), bs.len(), seeds.len()]
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let runs = points.and_then(|p| p.checked_mul(replicates));
        match runs {
            Some(r) if r <= self.max_runs => {}
            _ => bail!(
                "sweep has {} points x {replicates} replicates, more than the cap of {} runs",
                points.map_or("too many".to_string(), |p| p.to_string()),
                self.max_runs
            ),
        }

        let mut out = Vec::new();
        for &k1 in &k1s {
            for &k2 in &k2s {
                for &group_size in &ss {
                    for &workers in &ps {
                        for &gamma in &gammas {
                            for &batch in &bs {
                                for &seed in &seeds {
                                    let key = PointKey { k1, k2, group_size, workers, gamma, batch, seed };
                                    let config = apply(base, &self.axes, &key);
                                    out.push(SweepPoint { index: out.len(), key, config });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn apply(base: &ExperimentConfig, axes: &SweepAxes, key: &PointKey) -> ExperimentConfig {
    let mut c = base.clone();
    let h = &mut c.hyper;
    h.k1 = key.k1;
    h.k2 = key.k2;
    h.group_size = key.group_size;
    h.workers = key.workers;
    h.seed = key.seed;
    if !axes.gamma.is_empty() {
        h.gamma_schedule = vec![Breakpoint { from_round: 1, value: key.gamma }];
    }
    if !axes.batch.is_empty() {
        h.batch_schedule = vec![Breakpoint { from_round: 1, value: key.batch }];
    }
    c
}
