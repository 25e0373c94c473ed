use rayon::prelude::*;
use rayon::ThreadPool;

use super::metrics::Collector;
use super::{
    check_run_inputs, global_average, local_average, run_segment, RunObserver, RunOptions, RunResult, WorkerState,
};
use crate::comms::CommLedger;
use crate::config::ValidatedParams;
use crate::error::{Error, Result};
use crate::objectives::{Objective, StochasticObjective};

/// Runs hierarchical averaging SGD from `w0` on every worker.
///
/// With `opts.threads > 1` the workers' local segments run on a dedicated
/// rayon pool; results are bitwise independent of the thread count.
pub fn run_hier_avg(
    params: &ValidatedParams,
    objective: &Objective,
    w0: &[f64],
    opts: &RunOptions,
) -> Result<RunResult> {
    run_hier_avg_observed(params, objective, w0, opts, &mut ())
}

pub fn run_hier_avg_observed<O: RunObserver>(
    params: &ValidatedParams,
    objective: &Objective,
    w0: &[f64],
    opts: &RunOptions,
    observer: &mut O,
) -> Result<RunResult> {
    check_run_inputs(params, objective, w0)?;
    if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::ThreadPool(e.to_string()))?;
        execute(params, objective.as_dyn(), w0, opts, observer, Some(&pool))
    } else {
        execute(params, objective.as_dyn(), w0, opts, observer, None)
    }
}

#[allow(clippy::too_many_arguments)]
fn advance(
    workers: &mut [WorkerState],
    objective: &dyn StochasticObjective,
    gamma: f64,
    batch: usize,
    steps: usize,
    clock: u64,
    seed: u64,
    pool: Option<&ThreadPool>,
) {
    if let Some(pool) = pool {
        pool.install(|| {
            workers.par_iter_mut().for_each(|w| run_segment(w, objective, gamma, batch, steps, clock, seed))
        });
    } else {
        for w in workers.iter_mut() {
            run_segment(w, objective, gamma, batch, steps, clock, seed);
        }
    }
}

fn execute<O: RunObserver>(
    params: &ValidatedParams,
    objective: &dyn StochasticObjective,
    w0: &[f64],
    opts: &RunOptions,
    observer: &mut O,
    pool: Option<&ThreadPool>,
) -> Result<RunResult> {
    let topology = params.topology();
    let k2 = params.k2();
    let seed = params.seed();
    let mut ledger = CommLedger::new(params.workers(), params.group_size(), params.dim());
    let mut collector = Collector::new(objective, opts);
    let mut workers: Vec<WorkerState> = (0..params.workers()).map(|j| WorkerState::new(j, w0.to_vec())).collect();
    let mut synchronized = w0.to_vec();

    for round in 1..=params.rounds() {
        let (gamma, batch) = params.schedule().at(round);
        let round_start = (round as u64 - 1) * k2 as u64;
        collector.round_start(round, round_start, &synchronized);

        let mut offset = 0;
        for block in 0..params.beta() {
            let block_end = offset + params.block_len(block);
            while offset < block_end {
                // run up to the next step that must be observed, or the block end
                let next =
                    (offset + 1..block_end).find(|&o| collector.wants(round_start + o as u64)).unwrap_or(block_end);
                advance(&mut workers, objective, gamma, batch, next - offset, round_start + offset as u64, seed, pool);
                offset = next;

                if offset == block_end && params.runs_local_average(block) {
                    let before = observer.observes_local_averages().then(|| workers.clone());
                    for g in 0..topology.group_count() {
                        local_average(&mut workers[topology.members(g)])?;
                    }
                    ledger.record_local();
                    if let Some(before) = before {
                        observer.on_local_average(round, block, &before, &workers);
                    }
                }
                if offset < k2 && collector.wants(round_start + offset as u64) {
                    let states: Vec<&[f64]> = workers.iter().map(|w| w.params.as_slice()).collect();
                    collector.observe(round, round_start + offset as u64, offset, &states, &synchronized);
                }
            }
        }

        synchronized = global_average(&mut workers)?;
        ledger.record_global();
        observer.on_global_average(round, &synchronized, &workers);
        collector.round_end(&ledger);
    }

    let mut grad = vec![0.0; synchronized.len()];
    objective.gradient_into(&synchronized, &mut grad);
    Ok(RunResult {
        final_loss: objective.loss(&synchronized),
        final_grad_norm_sq: grad.iter().map(|g| g * g).sum(),
        final_params: synchronized,
        metrics: collector.finish(),
        ledger,
        total_steps: params.total_steps(),
    })
}
