use super::metrics::Collector;
use super::{check_run_inputs, sgd_step, RunOptions, RunResult};
use crate::comms::CommLedger;
use crate::config::ValidatedParams;
use crate::error::Result;
use crate::objectives::Objective;

/// Single-threaded reference for [`super::run_hier_avg`].
///
/// Walks each block worker by worker (all steps of worker 0, then worker 1,
/// ...) keeping every intermediate iterate, then replays the observations in
/// step order. Averages are written out as plain loops.
pub fn sequential_oracle(
    params: &ValidatedParams,
    objective: &Objective,
    w0: &[f64],
    opts: &RunOptions,
) -> Result<RunResult> {
    check_run_inputs(params, objective, w0)?;
    let obj = objective.as_dyn();
    let p = params.workers();
    let s = params.group_size();
    let d = w0.len();
    let k2 = params.k2();
    let mut ledger = CommLedger::new(p, s, d);
    let mut collector = Collector::new(obj, opts);
    let mut w: Vec<Vec<f64>> = vec![w0.to_vec(); p];
    let mut w_tilde = w0.to_vec();
    let mut grad = vec![0.0; d];

    for n in 1..=params.rounds() {
        let (gamma, batch) = params.schedule().at(n);
        let t0 = (n as u64 - 1) * k2 as u64;
        collector.round_start(n, t0, &w_tilde);

        let mut offset = 0;
        for b in 0..params.beta() {
            let len = params.block_len(b);
            // history[j][k] = worker j after k+1 steps of this block
            let mut history: Vec<Vec<Vec<f64>>> = Vec::with_capacity(p);
            for (j, wj) in w.iter_mut().enumerate() {
                let mut hist = Vec::with_capacity(len);
                for k in 0..len {
                    let t = t0 + (offset + k) as u64;
                    sgd_step(obj, wj, &mut grad, gamma, batch, params.seed(), j, t);
                    hist.push(wj.clone());
                }
                history.push(hist);
            }

            if params.runs_local_average(b) {
                for g in 0..p / s {
                    let mut mean = w[g * s].clone();
                    for j in g * s + 1..(g + 1) * s {
                        for i in 0..d {
                            mean[i] += w[j][i];
                        }
                    }
                    for m in mean.iter_mut() {
                        *m /= s as f64;
                    }
                    for j in g * s..(g + 1) * s {
                        w[j].clone_from(&mean);
                        history[j][len - 1].clone_from(&mean);
                    }
                }
                ledger.record_local();
            }

            for k in 0..len {
                let o = offset + k + 1;
                let t = t0 + o as u64;
                if o < k2 && collector.wants(t) {
                    let states: Vec<&[f64]> = history.iter().map(|h| h[k].as_slice()).collect();
                    collector.observe(n, t, o, &states, &w_tilde);
                }
            }
            offset += len;
        }

        let mut mean = w[0].clone();
        for wj in &w[1..] {
            for i in 0..d {
                mean[i] += wj[i];
            }
        }
        for m in mean.iter_mut() {
            *m /= p as f64;
        }
        for wj in w.iter_mut() {
            wj.clone_from(&mean);
        }
        w_tilde = mean;
        ledger.record_global();
        collector.round_end(&ledger);
    }

    Ok(RunResult {
        final_loss: objective.loss(&w_tilde)?,
        final_grad_norm_sq: objective.grad_norm_sq(&w_tilde)?,
        final_params: w_tilde,
        metrics: collector.finish(),
        ledger,
        total_steps: params.total_steps(),
    })
}
