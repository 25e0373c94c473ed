use serde::{Deserialize, Serialize};

use super::{kavg_bracket, local_bracket, BoundInputs};
use crate::error::{Error, Result};

pub const DEFAULT_K2_MAX: usize = 64;

/// `L gamma P` at or above this counts as the large-parallelism regime in
/// which the variance term is dropped from the comparison.
pub const LARGE_PARALLELISM_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvisorReport {
    /// `delta (F1 - F*) / (T gamma (1 - delta))`.
    pub condition_lhs: f64,
    /// `2 L gamma M / (P B) + L^2 gamma^2 M / (B S)`.
    pub condition_rhs: f64,
    pub condition_holds: bool,
    /// `(K2, B(K2))` for `K2 = 1..=k2_max` at fixed `T`.
    pub grid: Vec<(usize, f64)>,
    pub argmin_k2: usize,
    pub b1: f64,
    pub b2: f64,
    pub b2_below_b1: bool,
}

/// Evaluates the larger-K2 condition and the fixed-budget objective
///
/// `B(K2) = (alpha + beta K2 + eta f(K1, K2, S)) K2 / (K2 - delta)`
///
/// with `alpha = 2 gap/(T gamma)`, `beta = L gamma M/(P B)`,
/// `eta = L^2 gamma^2 M/(12 B)`. Grid points with `K2 < K1` use `K1 = K2`.
pub fn k2_advisor(inputs: &BoundInputs, total_steps: u64, k2_max: usize) -> Result<AdvisorReport> {
    inputs.check()?;
    if total_steps == 0 || k2_max < 2 {
        return Err(Error::InvalidBoundInputs("advisor needs T >= 1 and k2_max >= 2".into()));
    }
    let BoundInputs { lipschitz: l, variance: m, initial_gap: gap, gamma, .. } = *inputs;
    if gamma <= 0.0 {
        return Err(Error::InvalidBoundInputs("advisor needs gamma > 0".into()));
    }
    let t = total_steps as f64;
    let b = inputs.batch as f64;
    let s = inputs.group_size as f64;
    let pb = (inputs.workers * inputs.batch) as f64;
    let delta = inputs.delta();

    let condition_lhs = delta * gap / (t * gamma * (1.0 - delta));
    let condition_rhs = 2.0 * l * gamma * m / pb + l * l * gamma * gamma * m / (b * s);

    let alpha = 2.0 * gap / (t * gamma);
    let beta = l * gamma * m / pb;
    let eta = l * l * gamma * gamma * m / (12.0 * b);
    let objective = |k2: usize| {
        let k1 = inputs.k1.min(k2);
        let kf = k2 as f64;
        (alpha + beta * kf + eta * local_bracket(k1, k2, inputs.group_size)) * kf / (kf - delta)
    };
    let grid: Vec<(usize, f64)> = (1..=k2_max).map(|k| (k, objective(k))).collect();
    let argmin_k2 = grid.iter().fold((1, f64::INFINITY), |best, &(k, v)| if v < best.1 { (k, v) } else { best }).0;
    let (b1, b2) = (grid[0].1, grid[1].1);
    Ok(AdvisorReport {
        condition_lhs,
        condition_rhs,
        condition_holds: condition_lhs > condition_rhs,
        grid,
        argmin_k2,
        b1,
        b2,
        b2_below_b1: b2 < b1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct K1BracketReport {
    pub value: f64,
    /// `(S-1)(3 K2 + 2 K1 - 3)/S`.
    pub derivative: f64,
    pub increasing: bool,
}

/// Drift factor `f(K1)` and its slope in `K1`.
pub fn k1_bracket(k1: usize, k2: usize, s: usize) -> Result<K1BracketReport> {
    if k1 == 0 || k1 > k2 || s == 0 {
        return Err(Error::InvalidBoundInputs(format!("need 1 <= K1 <= K2 and S >= 1, got K1={k1} K2={k2} S={s}")));
    }
    let sf = s as f64;
    let derivative = (sf - 1.0) * (3.0 * k2 as f64 + 2.0 * k1 as f64 - 3.0) / sf;
    Ok(K1BracketReport { value: local_bracket(k1, k2, s), derivative, increasing: derivative > 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub k: usize,
    pub inflation: f64,
    /// Hierarchical bound with `K2 = (1+a)K, K1 = 1, S = 4`, variance term dropped.
    pub hier: f64,
    /// K-step averaging bound with interval `K`, variance term dropped.
    pub kavg: f64,
    pub hier_faster: bool,
    /// Same comparison with the variance term kept.
    pub hier_full: f64,
    pub kavg_full: f64,
    pub hier_faster_full: bool,
    /// `f1(K) - f2(K)` without the `eta` factor.
    pub drift_gap: f64,
    /// The drift gap at `K = 2`, `2(1+a)^2 - 1.5(1+a) - 11/4`.
    pub drift_gap_at_two: f64,
    pub l_gamma_p: f64,
    pub large_parallelism: bool,
}

/// `2c^2 - 1.5c - 2.75` with `c = 1 + a`.
pub fn comparison_gap_at_two(inflation: f64) -> f64 {
    let c = 1.0 + inflation;
    2.0 * c * c - 1.5 * c - 2.75
}

/// Largest inflation `a` for which the drift gap at `K = 2` is negative.
pub fn comparison_root() -> f64 {
    (1.5 + 24.25f64.sqrt()) / 4.0 - 1.0
}

/// Compares the hierarchical scheme with `K2 = (1+a)K`, `K1 = 1`, `S = 4`
/// against K-step averaging with interval `K` at equal `T = N K2` (taken
/// from `inputs`). Only `L, M, gap, gamma, B, P, delta_grad_w` are read from `inputs`.
pub fn compare_with_kavg(inputs: &BoundInputs, k: usize, inflation: f64) -> Result<ComparisonReport> {
    inputs.check()?;
    if k == 0 || !(0.0..=1.0).contains(&inflation) {
        return Err(Error::InvalidBoundInputs(format!("need K >= 1 and a in [0, 1], got K={k} a={inflation}")));
    }
    if inputs.gamma <= 0.0 {
        return Err(Error::InvalidBoundInputs("comparison needs gamma > 0".into()));
    }
    let BoundInputs { lipschitz: l, variance: m, initial_gap: gap, gamma, .. } = *inputs;
    let t = inputs.total_steps() as f64;
    let b = inputs.batch as f64;
    let pb = (inputs.workers * inputs.batch) as f64;
    let delta = inputs.delta();
    let alpha = 2.0 * gap / (t * gamma);
    let beta = l * gamma * m / pb;
    let eta6 = l * l * gamma * gamma * m / (6.0 * b);

    let kf = k as f64;
    let kh = (1.0 + inflation) * kf;
    let hier_drift = (kh - 1.0) * (2.0 * kh - 1.0) / 4.0;
    let kavg_drift = (kf - 1.0) * (2.0 * kf - 1.0);
    let g1 = kh / (kh - delta);
    let g2 = kf / (kf - delta);

    let hier = (alpha + eta6 * hier_drift) * g1;
    let kavg = (alpha + eta6 * kavg_drift) * g2;
    // full forms: eta6 * x == eta12 * 2x, matching the bracket (K-1)(4K-2) at S = 1
    // and (K2-1)(4K2-2)/4 at K1 = 1, S = 4
    let hier_full = (alpha + beta * kh + eta6 * hier_drift) * g1;
    let kavg_full = (alpha + beta * kf + eta6 * kavg_bracket(k) / 2.0) * g2;

    let l_gamma_p = l * gamma * inputs.workers as f64;
    Ok(ComparisonReport {
        k,
        inflation,
        hier,
        kavg,
        hier_faster: hier < kavg,
        hier_full,
        kavg_full,
        hier_faster_full: hier_full < kavg_full,
        drift_gap: hier_drift - kavg_drift,
        drift_gap_at_two: comparison_gap_at_two(inflation),
        l_gamma_p,
        large_parallelism: l_gamma_p >= LARGE_PARALLELISM_THRESHOLD,
    })
}
