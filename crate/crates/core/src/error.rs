use thiserror::Error;

/// Violations found while validating a [`HyperParams`](crate::config::HyperParams).
///
/// The `Display` text of every variant starts with the variant name so
/// command-line diagnostics can be matched by name.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("NonDividingGroupSize: group size {group_size} does not divide worker count {workers}")]
    NonDividingGroupSize { workers: usize, group_size: usize },
    #[error("IntervalOrder: local interval k1={k1} exceeds global interval k2={k2}")]
    IntervalOrder { k1: usize, k2: usize },
    #[error("NonIntegerBeta: k1={k1} does not divide k2={k2} (strict mode)")]
    NonIntegerBeta { k1: usize, k2: usize },
    #[error("EmptySchedule: {0} schedule has no entries")]
    EmptySchedule(&'static str),
    #[error("ZeroCount: {0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("InvalidStepSize: step size {gamma} at round {round} must be finite and > 0")]
    InvalidStepSize { round: usize, gamma: f64 },
    #[error("InvalidBatch: batch size at round {round} must be >= 1")]
    InvalidBatch { round: usize },
    #[error(
        "ScheduleCoverage: {schedule} schedule must start at round 1 with strictly increasing starts (got {start})"
    )]
    ScheduleCoverage { schedule: &'static str, start: usize },
    #[error("ScheduleBeyondHorizon: {schedule} schedule entry starts at round {start} > rounds {rounds}")]
    ScheduleBeyondHorizon { schedule: &'static str, start: usize, rounds: usize },
    #[error("IncreasingStepSize: diminishing schedule raises step size at round {round}")]
    IncreasingStepSize { round: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("DimensionMismatch: expected dimension {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("EmptyGroup: cannot average an empty group")]
    EmptyGroup,
    #[error("MissingDriftSeries: run was executed without drift recording")]
    MissingDriftSeries,
    #[error("DegenerateHorizon: total steps {total_steps} is smaller than P*B = {samples_per_step}")]
    DegenerateHorizon { total_steps: u64, samples_per_step: u64 },
    #[error("UnsupportedScheduleFamily: {0}")]
    UnsupportedScheduleFamily(String),
    #[error("MismatchedBudget: configurations process {left} and {right} total steps")]
    MismatchedBudget { left: u64, right: u64 },
    #[error("InvalidObjective: {0}")]
    InvalidObjective(String),
    #[error("InvalidBoundInputs: {0}")]
    InvalidBoundInputs(String),
    #[error("InvalidCostModel: {0}")]
    InvalidCostModel(String),
    #[error("ThreadPool: {0}")]
    ThreadPool(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
