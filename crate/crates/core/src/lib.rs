//! Hierarchical averaging SGD: a deterministic multi-worker simulator,
//! synthetic stochastic objectives, closed-form convergence bounds and a
//! communication cost model.
//!
//! Workers are split into contiguous groups of `S`. Each worker runs local
//! SGD, groups average every `K1` steps and all workers average every `K2`
//! steps.
//!
//! ```
//! use hieravg_core::{run_hier_avg, HyperParams, ObjectiveSpec, RunOptions};
//!
//! let params = HyperParams::constant(4, 2, 2, 4, 10, 2, 0.1, 1, 0).validate().unwrap();
//! let objective = ObjectiveSpec::NoisyQuadratic { eigenvalues: vec![1.0, 2.0], minimizer: None, sigma: 0.1 }
//!     .build()
//!     .unwrap();
//! let result = run_hier_avg(&params, &objective, &[1.0, 1.0], &RunOptions::default()).unwrap();
//! assert_eq!(result.ledger.n_global_reductions, 10);
//! ```

pub mod bounds;
pub mod comms;
pub mod config;
pub mod error;
pub mod experiment;
pub mod export;
pub mod objectives;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use bounds::{BoundInputs, BoundReport, ConditionCheck};
pub use comms::{comm_tradeoff_report, count_reductions, modeled_time, CommLedger, CostModel};
pub use config::{
    theorem1_schedule, Breakpoint, GroupTopology, HorizonSchedule, HyperParams, Schedule, ValidatedParams,
};
pub use error::{ConfigError, Error, Result};
pub use experiment::{
    run_experiment, BoundGrid, CompareSpec, ExperimentConfig, ExperimentOutcome, InitSpec, MetricOptions,
};
pub use objectives::{EstimationOptions, Objective, ObjectiveConstants, ObjectiveSpec, StochasticObjective};
pub use rng::SampleKey;
pub use simulator::{
    drift_diagnostic, global_average, local_average, local_sgd_segment, run_hier_avg, run_hier_avg_observed,
    sequential_oracle, DriftReport, RunObserver, RunOptions, RunResult, TrajectoryMetrics, WorkerState,
};
