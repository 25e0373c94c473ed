use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hieravg_core::ExperimentConfig;

mod commands;
mod plan;

const DEFAULT_OUT_DIR: &str = "hieravg-out";

#[derive(Parser)]
#[command(name = "hieravg", version, about = "Hierarchical averaging SGD experiments: runs, sweeps and bound tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write per_round.csv, per_step.csv, bounds.csv (and drift.csv).
    Run(Common),
    /// Run every point of a sweep plan and write summary.csv.
    Sweep(Common),
    /// Tabulate the fixed-step bound over the config's grid and run the K2 advisor.
    Bounds(Common),
    /// Compare the configured run against K-step averaging at the same number of steps.
    CompareKavg {
        #[command(flatten)]
        common: Common,
        /// K-step averaging interval; defaults to `compare.k` from the config.
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config (a sweep plan for `sweep`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "HIERAVG_OUT_DIR")]
    out: Option<PathBuf>,
    /// Number of replicates; replicate i uses seed base_seed + i.
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Skip the local average that directly precedes each global average.
    #[arg(long)]
    elide_redundant_local_avg: bool,
    /// Record per-step metrics every this many steps.
    #[arg(long)]
    metric_stride: Option<usize>,
}

impl Common {
    fn apply(&self, config: &mut ExperimentConfig) {
        if self.elide_redundant_local_avg {
            config.hyper.elide_redundant_local_avg = true;
        }
        if let Some(stride) = self.metric_stride {
            config.metrics.metric_stride = stride;
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn replicates(&self, default: usize) -> anyhow::Result<usize> {
        match self.seeds.unwrap_or(default) {
            0 => anyhow::bail!("--seeds must be at least 1"),
            n => Ok(n),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => commands::run(common),
        Command::Sweep(common) => commands::sweep(common),
        Command::Bounds(common) => commands::bounds(common),
        Command::CompareKavg { common, k } => commands::compare_kavg(common, *k),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("hieravg: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
