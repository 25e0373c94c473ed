//! Closed-form convergence bounds, their side conditions, and the decision
//! helpers built on them. Everything here is a pure function of
//! [`BoundInputs`].

mod advisor;

use serde::{Deserialize, Serialize};

use crate::config::ValidatedParams;
use crate::error::{Error, Result};
use crate::objectives::ObjectiveConstants;

pub use advisor::{
    compare_with_kavg, comparison_gap_at_two, comparison_root, k1_bracket, k2_advisor, AdvisorReport, ComparisonReport,
    K1BracketReport, DEFAULT_K2_MAX, LARGE_PARALLELISM_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Smoothness constant `L`.
    pub lipschitz: f64,
    /// Gradient noise bound `M`.
    pub variance: f64,
    /// Second-moment bound `M_G`.
    pub second_moment: f64,
    /// `F(w_tilde_1) - F*`.
    pub initial_gap: f64,
    pub gamma: f64,
    pub batch: usize,
    pub workers: usize,
    pub group_size: usize,
    pub k1: usize,
    pub k2: usize,
    pub rounds: usize,
    /// Intermediate-gradient constant `delta_{grad F, w}`; 0 is the conservative choice.
    #[serde(default)]
    pub delta_grad_w: f64,
}

impl BoundInputs {
    /// Inputs for a run configuration, using the round-1 step size and batch.
    pub fn new(constants: &ObjectiveConstants, params: &ValidatedParams, delta_grad_w: f64) -> Self {
        let (gamma, batch) = params.schedule().at(1);
        BoundInputs {
            lipschitz: constants.lipschitz,
            variance: constants.variance,
            second_moment: constants.second_moment,
            initial_gap: constants.initial_gap,
            gamma,
            batch,
            workers: params.workers(),
            group_size: params.group_size(),
            k1: params.k1(),
            k2: params.k2(),
            rounds: params.rounds(),
            delta_grad_w,
        }
    }

    /// `T = N * K2`.
    pub fn total_steps(&self) -> u64 {
        self.rounds as u64 * self.k2 as u64
    }

    /// `delta = L^2 gamma^2 (1 + delta_grad_w)`.
    pub fn delta(&self) -> f64 {
        let lg = self.lipschitz * self.gamma;
        lg * lg * (1.0 + self.delta_grad_w)
    }

    /// Largest admissible `delta_grad_w`: `K2(K2-1)/2 - 1`, floored at 0.
    pub fn delta_grad_w_max(&self) -> f64 {
        let k2 = self.k2 as f64;
        (k2 * (k2 - 1.0) / 2.0 - 1.0).max(0.0)
    }

    pub fn check(&self) -> Result<()> {
        let reals = [
            ("L", self.lipschitz),
            ("M", self.variance),
            ("M_G", self.second_moment),
            ("F1_minus_Fstar", self.initial_gap),
            ("gamma", self.gamma),
            ("delta_grad_w", self.delta_grad_w),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidBoundInputs(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let counts = [
            ("B", self.batch),
            ("P", self.workers),
            ("S", self.group_size),
            ("K1", self.k1),
            ("K2", self.k2),
            ("N", self.rounds),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidBoundInputs(format!("{name} must be >= 1")));
            }
        }
        if self.k1 > self.k2 {
            return Err(Error::InvalidBoundInputs(format!("K1 = {} exceeds K2 = {}", self.k1, self.k2)));
        }
        if !self.workers.is_multiple_of(self.group_size) {
            return Err(Error::InvalidBoundInputs(format!(
                "S = {} does not divide P = {}",
                self.group_size, self.workers
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub satisfied: bool,
    pub slack: f64,
}

impl ConditionCheck {
    fn new(name: &str, satisfied: bool, slack: f64) -> Self {
        ConditionCheck { name: name.to_string(), satisfied, slack }
    }
}

/// Bound value split into the initial-gap, variance and drift terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub terms: [f64; 3],
    pub conditions: Vec<ConditionCheck>,
}

impl BoundReport {
    fn from_terms(terms: [f64; 3], conditions: Vec<ConditionCheck>) -> Self {
        BoundReport { value: terms[0] + terms[1] + terms[2], terms, conditions }
    }

    pub fn conditions_ok(&self) -> bool {
        self.conditions.iter().all(|c| c.satisfied)
    }
}

/// `2 gap/(gamma T) + 4 L^2 gamma^2 K2^2 M_G^2 + L gamma M/(P B)`, the bound on
/// the mean squared gradient norm at the per-step averages.
pub fn theorem1_bound(inputs: &BoundInputs, total_steps: u64) -> Result<BoundReport> {
    inputs.check()?;
    theorem1_bound_with_k2(inputs, total_steps, inputs.k2 as f64)
}

/// [`theorem1_bound`] with a real-valued `K2`, as produced by the horizon schedule.
pub fn theorem1_bound_with_k2(inputs: &BoundInputs, total_steps: u64, k2: f64) -> Result<BoundReport> {
    if total_steps == 0 {
        return Err(Error::InvalidBoundInputs("T must be >= 1".into()));
    }
    let BoundInputs { lipschitz: l, variance: m, second_moment: mg, initial_gap: gap, gamma, .. } = *inputs;
    let pb = (inputs.workers * inputs.batch) as f64;
    let terms =
        [2.0 * gap / (gamma * total_steps as f64), 4.0 * l * l * gamma * gamma * k2 * k2 * mg * mg, l * gamma * m / pb];
    let lg = l * gamma;
    let cond = ConditionCheck::new("0 < L*gamma <= 1", lg > 0.0 && lg <= 1.0, 1.0 - lg);
    Ok(BoundReport::from_terms(terms, vec![cond]))
}

/// `(K2-K1)(4K2+K1-3)/S + (K1-1)(3K2+K1-2)`; the products are formed in
/// integers so special cases coincide exactly.
pub fn local_bracket(k1: usize, k2: usize, s: usize) -> f64 {
    let (k1, k2) = (k1 as u128, k2 as u128);
    let first = (k2 - k1) * (4 * k2 + k1 - 3);
    let second = (k1 - 1) * (3 * k2 + k1 - 2);
    first as f64 / s as f64 + second as f64
}

/// Drift factor of the plain K-step averaging bound, `(K-1)(4K-2)`.
pub fn kavg_bracket(k: usize) -> f64 {
    let k = k as u128;
    ((k - 1) * (4 * k - 2)) as f64
}

/// Left side of the step-size condition
/// `1 - L^2 gamma^2 (K2(K2-1)/2 - 1 - delta_grad_w) - L gamma K2`; holds iff `>= 0`.
pub fn theorem2_condition(inputs: &BoundInputs) -> (bool, f64) {
    let slack = step_condition_slack(inputs.lipschitz, inputs.gamma, inputs.k2, inputs.delta_grad_w);
    (slack >= 0.0, slack)
}

fn step_condition_slack(l: f64, gamma: f64, k2: usize, delta_grad_w: f64) -> f64 {
    let k2 = k2 as f64;
    let lg = l * gamma;
    1.0 - lg * lg * (k2 * (k2 - 1.0) / 2.0 - 1.0 - delta_grad_w) - lg * k2
}

fn delta_conditions(inputs: &BoundInputs) -> Vec<ConditionCheck> {
    let (ok, slack) = theorem2_condition(inputs);
    let delta = inputs.delta();
    let dmax = inputs.delta_grad_w_max();
    vec![
        ConditionCheck::new("step-size condition", ok, slack),
        ConditionCheck::new("0 < delta < 1", delta > 0.0 && delta < 1.0, delta.min(1.0 - delta)),
        ConditionCheck::new("delta_grad_w range", inputs.delta_grad_w <= dmax, dmax - inputs.delta_grad_w),
    ]
}

fn fixed_bound(inputs: &BoundInputs, bracket: fn(&BoundInputs) -> f64) -> Result<BoundReport> {
    inputs.check()?;
    let bracket = bracket(inputs);
    let BoundInputs { lipschitz: l, variance: m, initial_gap: gap, gamma, .. } = *inputs;
    let k2 = inputs.k2 as f64;
    let denom = k2 - inputs.delta();
    let b = inputs.batch as f64;
    let pb = (inputs.workers * inputs.batch) as f64;
    let terms = [
        2.0 * gap / (inputs.rounds as f64 * denom * gamma),
        l * gamma * m * k2 * k2 / (pb * denom),
        l * l * gamma * gamma * m * k2 / (12.0 * b * denom) * bracket,
    ];
    Ok(BoundReport::from_terms(terms, delta_conditions(inputs)))
}

/// Bound on `1/N sum_n ||grad F(w_tilde_n)||^2` for constant step size and batch.
pub fn theorem2_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    fixed_bound(inputs, |i| local_bracket(i.k1, i.k2, i.group_size))
}

/// The same bound for plain K-step averaging with `K = inputs.k2`, written
/// with its own drift factor.
pub fn kavg_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    fixed_bound(inputs, |i| kavg_bracket(i.k2))
}

/// Weighted bound for a per-round schedule `(gamma_j, B_j)`, `j = 1..=N`,
/// with `(K2 - 1)` denominators. `inputs.gamma`, `inputs.batch` and
/// `inputs.rounds` are ignored. `K2 = 1` makes the bound infinite and is flagged.
pub fn theorem3_bound(schedule: &[(f64, usize)], inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.check()?;
    if schedule.is_empty() {
        return Err(Error::InvalidBoundInputs("schedule must have at least one round".into()));
    }
    if let Some(&(g, b)) = schedule.iter().find(|&&(g, b)| !(g.is_finite() && g > 0.0) || b == 0) {
        return Err(Error::InvalidBoundInputs(format!("invalid schedule entry gamma = {g}, B = {b}")));
    }
    let BoundInputs { lipschitz: l, variance: m, initial_gap: gap, .. } = *inputs;
    let k2 = inputs.k2 as f64;
    let km1 = k2 - 1.0;
    let p = inputs.workers as f64;
    let bracket = local_bracket(inputs.k1, inputs.k2, inputs.group_size);

    let gamma_sum: f64 = schedule.iter().map(|&(g, _)| g).sum();
    let mut variance_sum = 0.0;
    let mut drift_sum = 0.0;
    let mut min_slack = f64::INFINITY;
    for &(g, b) in schedule {
        let b = b as f64;
        variance_sum += l * m * k2 * k2 * g * g / (p * b);
        drift_sum += l * l * m * k2 * g * g * g / (12.0 * b);
        min_slack = min_slack.min(step_condition_slack(l, g, inputs.k2, inputs.delta_grad_w));
    }
    let scale = km1 * gamma_sum;
    let terms = if inputs.k2 == 1 {
        [f64::INFINITY; 3]
    } else {
        [2.0 * gap / scale, variance_sum / scale, drift_sum / scale * bracket]
    };
    let dmax = inputs.delta_grad_w_max();
    let conditions = vec![
        ConditionCheck::new("step-size condition for every round", min_slack >= 0.0, min_slack),
        ConditionCheck::new("K2 > 1", inputs.k2 > 1, km1),
        ConditionCheck::new("delta_grad_w range", inputs.delta_grad_w <= dmax, dmax - inputs.delta_grad_w),
    ];
    Ok(BoundReport::from_terms(terms, conditions))
}

/// Schedule families understood by [`schedule_convergence_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScheduleFamily {
    /// `gamma_j ∝ j^-gamma_decay`, `B_j ∝ j^batch_growth`.
    PowerLaw { gamma_decay: f64, batch_growth: f64 },
    /// Explicit finite table; convergence of infinite sums cannot be decided.
    Tabulated(Vec<(f64, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConvergence {
    /// `sum gamma_j = inf`.
    pub step_sum_diverges: bool,
    /// `sum gamma_j^2 / (P B_j) < inf`.
    pub variance_sum_converges: bool,
    /// `sum gamma_j^3 / B_j < inf`.
    pub drift_sum_converges: bool,
}

impl ScheduleConvergence {
    pub fn all(&self) -> bool {
        self.step_sum_diverges && self.variance_sum_converges && self.drift_sum_converges
    }
}

/// Decides the three limit conditions by p-series comparison.
pub fn schedule_convergence_check(family: &ScheduleFamily) -> Result<ScheduleConvergence> {
    match *family {
        ScheduleFamily::PowerLaw { gamma_decay: a, batch_growth: b } => {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::UnsupportedScheduleFamily("non-finite exponents".into()));
            }
            Ok(ScheduleConvergence {
                step_sum_diverges: a <= 1.0,
                variance_sum_converges: 2.0 * a + b > 1.0,
                drift_sum_converges: 3.0 * a + b > 1.0,
            })
        }
        ScheduleFamily::Tabulated(_) => Err(Error::UnsupportedScheduleFamily(
            "tabulated schedules have no limit behaviour; use a power-law family".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn inputs() -> BoundInputs {
        BoundInputs {
            lipschitz: 1.0,
            variance: 1.0,
            second_moment: 1.0,
            initial_gap: 1.0,
            gamma: 0.1,
            batch: 2,
            workers: 4,
            group_size: 2,
            k1: 1,
            k2: 2,
            rounds: 50,
            delta_grad_w: 0.0,
        }
    }

    #[test]
    fn horizon_bound_vanishes_without_sources() {
        let i = BoundInputs { variance: 0.0, second_moment: 0.0, initial_gap: 0.0, ..inputs() };
        assert_eq!(theorem1_bound(&i, 100).unwrap().value, 0.0);
    }

    #[test]
    fn horizon_bound_arithmetic() {
        let r = theorem1_bound(&inputs(), 100).unwrap();
        let expect = 2.0 / (0.1 * 100.0) + 4.0 * 0.01 * 4.0 * 1.0 + 0.1 / 8.0;
        assert!((r.value - 0.3725).abs() < 1e-15);
        assert!((r.value - expect).abs() < 1e-15);
        assert!(r.conditions_ok());
        let hot = BoundInputs { gamma: 2.0, ..inputs() };
        assert!(!theorem1_bound(&hot, 100).unwrap().conditions_ok());
    }

    #[test]
    fn horizon_bound_scales_with_horizon() {
        let base = BoundInputs { workers: 4, batch: 2, ..inputs() };
        let eval = |t: u64| {
            let pb = 8.0f64;
            let gamma = (pb / t as f64).sqrt();
            let k2 = (t as f64).powf(0.25) / pb.powf(0.75);
            theorem1_bound_with_k2(&BoundInputs { gamma, ..base }, t, k2).unwrap().value
        };
        for t in [1u64 << 10, 1 << 14, 1 << 20] {
            let ratio = eval(2 * t) / eval(t);
            assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12, "T = {t}: {ratio}");
        }
    }

    #[test]
    fn bracket_examples() {
        assert_eq!(local_bracket(4, 32, 4), 1197.0);
        assert_eq!(local_bracket(1, 1, 3), 0.0);
        for k in 1..40 {
            assert_eq!(local_bracket(k, k, 7), kavg_bracket(k));
            assert_eq!(local_bracket(1, k, 1), kavg_bracket(k));
        }
    }

    #[test]
    fn kavg_special_cases_match() {
        for k in [1usize, 2, 5, 16] {
            let a = BoundInputs { k1: k, k2: k, group_size: 2, ..inputs() };
            let b = BoundInputs { k1: 1, k2: k, group_size: 1, ..inputs() };
            let kav = kavg_bound(&a).unwrap().value;
            assert_eq!(theorem2_bound(&a).unwrap().value, kav);
            assert_eq!(theorem2_bound(&b).unwrap().value, kav);
        }
        let single = BoundInputs { k1: 1, k2: 1, ..inputs() };
        assert_eq!(theorem2_bound(&single).unwrap().terms[2], 0.0);
    }

    #[test]
    fn condition_examples() {
        let base = BoundInputs { k2: 10, ..inputs() };
        assert_eq!(theorem2_condition(&BoundInputs { gamma: 0.0, ..base }), (true, 1.0));
        let (ok, slack) = theorem2_condition(&BoundInputs { gamma: 0.01, ..base });
        assert!(ok);
        assert!((slack - 0.8956).abs() < 1e-12);
        let (ok, slack) = theorem2_condition(&BoundInputs { gamma: 0.5, ..base });
        assert!(!ok && slack < -5.0);
    }

    #[test]
    fn scheduled_bound_constant_schedule_ratio() {
        let i = BoundInputs { k1: 2, k2: 8, gamma: 0.05, ..inputs() };
        let t2 = theorem2_bound(&i).unwrap();
        let sched = vec![(i.gamma, i.batch); i.rounds];
        let t3 = theorem3_bound(&sched, &i).unwrap();
        let expect = (8.0 - i.delta()) / 7.0;
        assert!((t3.value / t2.value - expect).abs() < 1e-12);
    }

    #[test]
    fn scheduled_bound_single_round_closed_form() {
        let i = BoundInputs { k1: 2, k2: 4, ..inputs() };
        let (g, b) = (0.05, 3usize);
        let r = theorem3_bound(&[(g, b)], &i).unwrap();
        let bracket = local_bracket(2, 4, 2);
        let expect = 2.0 / (3.0 * g) + 16.0 * g / (4.0 * 3.0 * 3.0) + 4.0 * g * g / (12.0 * 3.0 * 3.0) * bracket;
        assert!((r.value - expect).abs() <= 1e-14 * expect);
    }

    #[test]
    fn scheduled_bound_decreases_under_diminishing_schedule() {
        let i = BoundInputs { k1: 2, k2: 4, ..inputs() };
        let sched = |n: usize| (1..=n).map(|j| (0.1 / j as f64, j)).collect::<Vec<_>>();
        let short = theorem3_bound(&sched(100), &i).unwrap();
        let long = theorem3_bound(&sched(10_000), &i).unwrap();
        assert!(long.value < short.value);
        assert!(long.conditions_ok());
    }

    #[test]
    fn scheduled_bound_flags_single_step_rounds() {
        let i = BoundInputs { k1: 1, k2: 1, ..inputs() };
        let r = theorem3_bound(&[(0.1, 1)], &i).unwrap();
        assert!(!r.conditions_ok());
        assert!(r.value.is_infinite());
    }

    #[test]
    fn power_law_checks() {
        let pl =
            |a, b| schedule_convergence_check(&ScheduleFamily::PowerLaw { gamma_decay: a, batch_growth: b }).unwrap();
        let c = pl(0.5, 0.5);
        assert!(c.step_sum_diverges && c.variance_sum_converges && c.drift_sum_converges);
        assert!(!pl(1.1, 0.0).step_sum_diverges);
        let c = pl(0.0, 0.0);
        assert_eq!((c.step_sum_diverges, c.variance_sum_converges, c.drift_sum_converges), (true, false, false));
        assert!(matches!(
            schedule_convergence_check(&ScheduleFamily::Tabulated(vec![(0.1, 1)])),
            Err(Error::UnsupportedScheduleFamily(_))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(theorem2_bound(&BoundInputs { k1: 3, k2: 2, ..inputs() }).is_err());
        assert!(theorem2_bound(&BoundInputs { variance: -1.0, ..inputs() }).is_err());
        assert!(theorem2_bound(&BoundInputs { group_size: 3, ..inputs() }).is_err());
    }

    fn arb_inputs() -> impl Strategy<Value = BoundInputs> {
        (
            0.1f64..10.0,
            0.0f64..10.0,
            0.0f64..10.0,
            0.0f64..10.0,
            1e-4f64..0.05,
            1usize..64,
            1usize..6,
            0usize..4,
            2usize..48,
            1usize..100,
        )
            .prop_map(|(l, m, mg, gap, lg, b, pexp, sexp, k2, n)| {
                let s = 1usize << sexp.min(pexp);
                BoundInputs {
                    lipschitz: l,
                    variance: m,
                    second_moment: mg,
                    initial_gap: gap,
                    gamma: lg / l,
                    batch: b,
                    workers: 1 << pexp,
                    group_size: s,
                    k1: 1,
                    k2,
                    rounds: n,
                    delta_grad_w: 0.0,
                }
            })
    }

    proptest! {
        #[test]
        fn terms_sum_to_value(i in arb_inputs(), k1 in 1usize..48) {
            let i = BoundInputs { k1: k1.min(i.k2), ..i };
            for r in [theorem2_bound(&i).unwrap(), kavg_bound(&i).unwrap(), theorem1_bound(&i, i.total_steps()).unwrap()] {
                let sum = r.terms[0] + r.terms[1] + r.terms[2];
                prop_assert!((r.value - sum).abs() <= 4.0 * f64::EPSILON * r.value.abs());
                prop_assert!(r.value.is_finite() && r.value >= 0.0);
            }
        }

        #[test]
        fn fixed_step_bound_monotone_in_k1_and_s(i in arb_inputs()) {
            prop_assume!(i.workers > 1);
            let s = i.workers.clamp(2, 4);
            let base = BoundInputs { group_size: s, ..i };
            let mut prev = theorem2_bound(&BoundInputs { k1: 2.min(i.k2), ..base }).unwrap().value;
            for k1 in 3..=i.k2 {
                let v = theorem2_bound(&BoundInputs { k1, ..base }).unwrap().value;
                prop_assert!(v >= prev);
                prev = v;
            }
            let k1 = (i.k2 / 2).max(1);
            let mut prev = theorem2_bound(&BoundInputs { k1, group_size: 1, ..i }).unwrap().value;
            let mut s = 2;
            while s <= i.workers {
                let v = theorem2_bound(&BoundInputs { k1, group_size: s, ..i }).unwrap().value;
                prop_assert!(v <= prev);
                prev = v;
                s *= 2;
            }
        }

        #[test]
        fn kavg_collapse(i in arb_inputs()) {
            let a = theorem2_bound(&BoundInputs { k1: 1, group_size: 1, ..i }).unwrap().value;
            let b = theorem2_bound(&BoundInputs { k1: i.k2, ..i }).unwrap().value;
            prop_assert_eq!(a, b);
        }
    }
}
