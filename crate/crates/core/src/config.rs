//! Run configuration: hyper-parameters, step-size/batch schedules, group
//! topology and the horizon-driven schedule generator.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};

/// One breakpoint of a per-round schedule: `value` applies from `from_round`
/// (1-based, inclusive) until the next breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint<T> {
    pub from_round: usize,
    pub value: T,
}

fn default_true() -> bool {
    true
}

/// Full configuration of a hierarchical averaging run, as read from a config
/// file. Validate it with [`HyperParams::validate`] before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Worker count `P`.
    pub workers: usize,
    /// Local group size `S`.
    pub group_size: usize,
    /// Local averaging interval `K1`, in SGD steps.
    pub k1: usize,
    /// Global averaging interval `K2`, in SGD steps.
    pub k2: usize,
    /// Number of global rounds `N`.
    pub rounds: usize,
    /// Parameter dimension `d`.
    pub dim: usize,
    pub gamma_schedule: Vec<Breakpoint<f64>>,
    pub batch_schedule: Vec<Breakpoint<usize>>,
    pub seed: u64,
    /// Require `k1 | k2`. In relaxed mode the last local block of each round
    /// is truncated to `k2 mod k1` steps.
    #[serde(default = "default_true")]
    pub strict: bool,
    /// Require step sizes to be non-increasing across schedule entries.
    #[serde(default)]
    pub diminishing: bool,
    /// Skip the local average that immediately precedes each global average.
    #[serde(default)]
    pub elide_redundant_local_avg: bool,
}

impl HyperParams {
    /// Constant step size and batch size over all rounds.
    #[allow(clippy::too_many_arguments)]
    pub fn constant(
        workers: usize,
        group_size: usize,
        k1: usize,
        k2: usize,
        rounds: usize,
        dim: usize,
        gamma: f64,
        batch: usize,
        seed: u64,
    ) -> Self {
        HyperParams {
            workers,
            group_size,
            k1,
            k2,
            rounds,
            dim,
            gamma_schedule: vec![Breakpoint { from_round: 1, value: gamma }],
            batch_schedule: vec![Breakpoint { from_round: 1, value: batch }],
            seed,
            strict: true,
            diminishing: false,
            elide_redundant_local_avg: false,
        }
    }

    pub fn validate(&self) -> Result<ValidatedParams, ConfigError> {
        for (name, v) in [
            ("workers", self.workers),
            ("group_size", self.group_size),
            ("k1", self.k1),
            ("k2", self.k2),
            ("rounds", self.rounds),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(ConfigError::ZeroCount(name));
            }
        }
        if self.group_size > self.workers || !self.workers.is_multiple_of(self.group_size) {
            return Err(ConfigError::NonDividingGroupSize { workers: self.workers, group_size: self.group_size });
        }
        if self.k1 > self.k2 {
            return Err(ConfigError::IntervalOrder { k1: self.k1, k2: self.k2 });
        }
        if self.strict && !self.k2.is_multiple_of(self.k1) {
            return Err(ConfigError::NonIntegerBeta { k1: self.k1, k2: self.k2 });
        }
        let schedule = Schedule::merge(&self.gamma_schedule, &self.batch_schedule, self.rounds)?;
        if self.diminishing {
            schedule.check_diminishing()?;
        }
        Ok(ValidatedParams { raw: self.clone(), blocks_per_round: self.k2.div_ceil(self.k1), schedule })
    }
}

/// Merged step-size / batch schedule, one entry per breakpoint of either input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    entries: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub start_round: usize,
    pub gamma: f64,
    pub batch: usize,
}

fn check_breakpoints<T>(name: &'static str, points: &[Breakpoint<T>], rounds: usize) -> Result<(), ConfigError> {
    let first = points.first().ok_or(ConfigError::EmptySchedule(name))?;
    if first.from_round != 1 {
        return Err(ConfigError::ScheduleCoverage { schedule: name, start: first.from_round });
    }
    for pair in points.windows(2) {
        if pair[1].from_round <= pair[0].from_round {
            return Err(ConfigError::ScheduleCoverage { schedule: name, start: pair[1].from_round });
        }
    }
    let last = points[points.len() - 1].from_round;
    if last > rounds {
        return Err(ConfigError::ScheduleBeyondHorizon { schedule: name, start: last, rounds });
    }
    Ok(())
}

fn value_at<T: Copy>(points: &[Breakpoint<T>], round: usize) -> T {
    let idx = points.partition_point(|p| p.from_round <= round);
    points[idx.saturating_sub(1)].value
}

impl Schedule {
    pub fn merge(gamma: &[Breakpoint<f64>], batch: &[Breakpoint<usize>], rounds: usize) -> Result<Self, ConfigError> {
        check_breakpoints("gamma", gamma, rounds)?;
        check_breakpoints("batch", batch, rounds)?;
        let mut starts: Vec<usize> =
            gamma.iter().map(|p| p.from_round).chain(batch.iter().map(|p| p.from_round)).collect();
        starts.sort_unstable();
        starts.dedup();
        let entries: Vec<ScheduleEntry> = starts
            .into_iter()
            .map(|start_round| ScheduleEntry {
                start_round,
                gamma: value_at(gamma, start_round),
                batch: value_at(batch, start_round),
            })
            .collect();
        for e in &entries {
            if !(e.gamma.is_finite() && e.gamma > 0.0) {
                return Err(ConfigError::InvalidStepSize { round: e.start_round, gamma: e.gamma });
            }
            if e.batch == 0 {
                return Err(ConfigError::InvalidBatch { round: e.start_round });
            }
        }
        Ok(Schedule { entries })
    }

    fn check_diminishing(&self) -> Result<(), ConfigError> {
        for pair in self.entries.windows(2) {
            if pair[1].gamma > pair[0].gamma {
                return Err(ConfigError::IncreasingStepSize { round: pair[1].start_round });
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    /// Step size and batch size in effect during `round` (1-based).
    pub fn at(&self, round: usize) -> (f64, usize) {
        let idx = self.entries.partition_point(|e| e.start_round <= round);
        let e = self.entries[idx.saturating_sub(1)];
        (e.gamma, e.batch)
    }

    pub fn is_constant(&self) -> bool {
        self.entries.len() == 1
    }
}

/// Hyper-parameters that passed validation, with the block structure of a
/// round precomputed. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParams {
    raw: HyperParams,
    blocks_per_round: usize,
    schedule: Schedule,
}

impl ValidatedParams {
    pub fn raw(&self) -> &HyperParams {
        &self.raw
    }

    pub fn workers(&self) -> usize {
        self.raw.workers
    }

    pub fn group_size(&self) -> usize {
        self.raw.group_size
    }

    pub fn group_count(&self) -> usize {
        self.raw.workers / self.raw.group_size
    }

    pub fn k1(&self) -> usize {
        self.raw.k1
    }

    pub fn k2(&self) -> usize {
        self.raw.k2
    }

    pub fn rounds(&self) -> usize {
        self.raw.rounds
    }

    pub fn dim(&self) -> usize {
        self.raw.dim
    }

    pub fn seed(&self) -> u64 {
        self.raw.seed
    }

    pub fn is_strict(&self) -> bool {
        self.raw.strict
    }

    pub fn elides_redundant_local_avg(&self) -> bool {
        self.raw.elide_redundant_local_avg
    }

    /// Local-averaging blocks per round; equals `K2 / K1` in strict mode.
    pub fn beta(&self) -> usize {
        self.blocks_per_round
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// `T = N * K2`.
    pub fn total_steps(&self) -> u64 {
        self.raw.rounds as u64 * self.raw.k2 as u64
    }

    /// Step count of local block `b` within a round. Only the last block can
    /// be shorter than `K1`, and only in relaxed mode.
    pub fn block_len(&self, b: usize) -> usize {
        let start = b * self.raw.k1;
        (self.raw.k2 - start).min(self.raw.k1)
    }

    /// Whether the local average closing block `b` is executed.
    pub fn runs_local_average(&self, b: usize) -> bool {
        !(self.raw.elide_redundant_local_avg && b + 1 == self.blocks_per_round)
    }

    pub fn topology(&self) -> GroupTopology {
        GroupTopology::contiguous(self.raw.workers, self.raw.group_size).expect("validated params always have S | P")
    }

    /// Same configuration with a different seed; validation invariants are unaffected.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.raw.seed = seed;
        out
    }
}

/// Partition of workers into equally sized local groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTopology {
    assignment: Vec<usize>,
    group_size: usize,
}

impl GroupTopology {
    /// Worker `j` goes to group `j / S`.
    pub fn contiguous(workers: usize, group_size: usize) -> Result<Self, ConfigError> {
        if workers == 0 {
            return Err(ConfigError::ZeroCount("workers"));
        }
        if group_size == 0 || group_size > workers || !workers.is_multiple_of(group_size) {
            return Err(ConfigError::NonDividingGroupSize { workers, group_size });
        }
        Ok(GroupTopology { assignment: (0..workers).map(|j| j / group_size).collect(), group_size })
    }

    pub fn group_of(&self, worker: usize) -> usize {
        self.assignment[worker]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn group_count(&self) -> usize {
        self.assignment.len() / self.group_size
    }

    pub fn workers(&self) -> usize {
        self.assignment.len()
    }

    /// Worker indices of group `g`, ascending.
    pub fn members(&self, g: usize) -> Range<usize> {
        g * self.group_size..(g + 1) * self.group_size
    }
}

/// Step size and global interval that achieve the `O(1/sqrt(PBT))` rate for a
/// horizon of `T` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonSchedule {
    pub gamma: f64,
    pub k2_raw: f64,
    /// `max(1, round(k2_raw))`.
    pub k2: usize,
}

/// `gamma = sqrt(PB/T)`, `K2 = T^(1/4) / (PB)^(3/4)`.
pub fn theorem1_schedule(total_steps: u64, workers: usize, batch: usize) -> Result<HorizonSchedule> {
    let pb = workers as u64 * batch as u64;
    if pb == 0 || total_steps < pb {
        return Err(Error::DegenerateHorizon { total_steps, samples_per_step: pb });
    }
    let t = total_steps as f64;
    let pb = pb as f64;
    let gamma = (pb / t).sqrt();
    let k2_raw = t.powf(0.25) / pb.powf(0.75);
    let k2 = (k2_raw.round() as usize).max(1);
    Ok(HorizonSchedule { gamma, k2_raw, k2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> HyperParams {
        HyperParams::constant(16, 4, 4, 32, 10, 8, 0.05, 4, 7)
    }

    #[test]
    fn validate_computes_beta() {
        let v = base().validate().unwrap();
        assert_eq!(v.beta(), 8);
        assert_eq!(v.total_steps(), 320);
        assert_eq!(v.group_count(), 4);
    }

    #[test]
    fn validate_rejects_bad_groups_and_intervals() {
        let mut p = base();
        p.group_size = 3;
        assert!(matches!(p.validate(), Err(ConfigError::NonDividingGroupSize { .. })));
        let mut p = base();
        p.k1 = 8;
        p.k2 = 4;
        assert!(matches!(p.validate(), Err(ConfigError::IntervalOrder { k1: 8, k2: 4 })));
        let mut p = base();
        p.k1 = 3;
        assert!(matches!(p.validate(), Err(ConfigError::NonIntegerBeta { .. })));
        let mut p = base();
        p.gamma_schedule.clear();
        assert_eq!(p.validate(), Err(ConfigError::EmptySchedule("gamma")));
        let mut p = base();
        p.group_size = 32;
        assert!(matches!(p.validate(), Err(ConfigError::NonDividingGroupSize { .. })));
    }

    #[test]
    fn relaxed_mode_truncates_last_block() {
        let mut p = base();
        p.k1 = 5;
        p.strict = false;
        let v = p.validate().unwrap();
        assert_eq!(v.beta(), 7);
        let lens: Vec<usize> = (0..v.beta()).map(|b| v.block_len(b)).collect();
        assert_eq!(lens, vec![5, 5, 5, 5, 5, 5, 2]);
        assert_eq!(lens.iter().sum::<usize>(), 32);
    }

    #[test]
    fn schedule_lookup_and_validation() {
        let mut p = base();
        p.gamma_schedule = vec![Breakpoint { from_round: 1, value: 0.1 }, Breakpoint { from_round: 5, value: 0.01 }];
        p.batch_schedule = vec![Breakpoint { from_round: 1, value: 2 }, Breakpoint { from_round: 3, value: 8 }];
        p.diminishing = true;
        let v = p.validate().unwrap();
        assert_eq!(v.schedule().entries().len(), 3);
        assert_eq!(v.schedule().at(1), (0.1, 2));
        assert_eq!(v.schedule().at(4), (0.1, 8));
        assert_eq!(v.schedule().at(10), (0.01, 8));

        p.gamma_schedule[1].value = 0.2;
        assert_eq!(p.validate(), Err(ConfigError::IncreasingStepSize { round: 5 }));
        p.gamma_schedule[1].value = -1.0;
        p.diminishing = false;
        assert!(matches!(p.validate(), Err(ConfigError::InvalidStepSize { round: 5, .. })));
        p.gamma_schedule[1] = Breakpoint { from_round: 11, value: 0.01 };
        assert!(matches!(p.validate(), Err(ConfigError::ScheduleBeyondHorizon { .. })));
        p.gamma_schedule[0].from_round = 2;
        assert!(matches!(p.validate(), Err(ConfigError::ScheduleCoverage { .. })));
        let mut p = base();
        p.batch_schedule[0].value = 0;
        assert!(matches!(p.validate(), Err(ConfigError::InvalidBatch { .. })));
    }

    #[test]
    fn elide_flag_skips_last_block_average() {
        let mut p = base();
        p.elide_redundant_local_avg = true;
        let v = p.validate().unwrap();
        assert!(v.runs_local_average(0));
        assert!(!v.runs_local_average(v.beta() - 1));
    }

    #[test]
    fn contiguous_topology_examples() {
        let t = GroupTopology::contiguous(4, 2).unwrap();
        assert_eq!(t.assignment(), &[0, 0, 1, 1]);
        let t = GroupTopology::contiguous(4, 4).unwrap();
        assert_eq!(t.assignment(), &[0, 0, 0, 0]);
        let t = GroupTopology::contiguous(4, 1).unwrap();
        assert_eq!(t.assignment(), &[0, 1, 2, 3]);
        assert!(GroupTopology::contiguous(4, 3).is_err());
    }

    #[test]
    fn horizon_schedule_examples() {
        let s = theorem1_schedule(1 << 20, 4, 1).unwrap();
        assert_eq!(s.gamma, 2f64.powi(-9));
        assert!((s.k2_raw - 11.313708498984761).abs() < 1e-12);
        assert_eq!(s.k2, 11);

        let s = theorem1_schedule(64, 16, 4).unwrap();
        assert_eq!(s.gamma, 1.0);
        assert!(s.k2_raw <= 1.0);
        assert_eq!(s.k2, 1);

        let s = theorem1_schedule(1 << 16, 16, 4).unwrap();
        assert_eq!(s.gamma, 0.03125);
        assert!((s.k2_raw - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(s.k2, 1);

        assert!(matches!(theorem1_schedule(10, 4, 4), Err(Error::DegenerateHorizon { .. })));
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(p in 1usize..9, s_exp in 0u32..3, k1 in 1usize..6, beta in 1usize..6, n in 1usize..20, seed: u64) {
            let s = 1usize << s_exp;
            let workers = p * s;
            let raw = HyperParams::constant(workers, s, k1, k1 * beta, n, 3, 0.1, 2, seed);
            let once = raw.validate().unwrap();
            let twice = once.raw().validate().unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn contiguous_topology_is_partition(groups in 1usize..20, s in 1usize..20) {
            let t = GroupTopology::contiguous(groups * s, s).unwrap();
            prop_assert_eq!(t.group_count(), groups);
            let mut seen = vec![false; groups * s];
            for g in 0..groups {
                let members = t.members(g);
                prop_assert_eq!(members.len(), s);
                for j in members {
                    prop_assert_eq!(t.group_of(j), g);
                    prop_assert!(!seen[j]);
                    seen[j] = true;
                }
            }
            prop_assert!(seen.into_iter().all(|x| x));
        }

        #[test]
        fn horizon_step_size_squares_back(t_exp in 4u32..40, p in 1usize..64, b in 1usize..64) {
            let pb = (p * b) as u64;
            let t = (1u64 << t_exp).max(pb) + pb * 3;
            let s = theorem1_schedule(t, p, b).unwrap();
            let lhs = s.gamma * s.gamma * t as f64;
            let rhs = pb as f64;
            prop_assert!((lhs - rhs).abs() <= 2.0 * f64::EPSILON * rhs, "{lhs} vs {rhs}");
        }
    }
}
