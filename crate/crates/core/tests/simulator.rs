use hieravg_core::{
    drift_diagnostic, run_hier_avg, run_hier_avg_observed, sequential_oracle, HyperParams, Objective,
    ObjectiveConstants, ObjectiveSpec, RunObserver, RunOptions, RunResult, SampleKey, ValidatedParams, WorkerState,
};
use proptest::prelude::*;

fn quadratic(d: usize, sigma: f64) -> Objective {
    let eigenvalues = (0..d).map(|i| 0.5 + i as f64 / d as f64).collect();
    ObjectiveSpec::NoisyQuadratic { eigenvalues, minimizer: None, sigma }.build().unwrap()
}

fn logistic(d: usize) -> Objective {
    ObjectiveSpec::SyntheticLogistic { dim: d, samples: 64, separation: 2.0, l2: 0.01, data_seed: 1 }.build().unwrap()
}

fn nonconvex(d: usize) -> Objective {
    ObjectiveSpec::NonconvexTest { dim: d, amplitude: 1.0, sigma: 0.3 }.build().unwrap()
}

fn w0(d: usize) -> Vec<f64> {
    (0..d).map(|i| 1.0 - 0.1 * i as f64).collect()
}

fn constant(
    p: usize,
    s: usize,
    k1: usize,
    k2: usize,
    n: usize,
    d: usize,
    gamma: f64,
    b: usize,
    seed: u64,
) -> ValidatedParams {
    HyperParams::constant(p, s, k1, k2, n, d, gamma, b, seed).validate().unwrap()
}

/// One SGD step with the same key layout as the simulator.
fn reference_step(obj: &Objective, w: &mut [f64], gamma: f64, batch: usize, seed: u64, worker: usize, t: u64) {
    let mut acc = vec![0.0; w.len()];
    for s in 0..batch {
        obj.as_dyn().add_sample_gradient(w, SampleKey::new(seed, worker, t, s), &mut acc);
    }
    let coef = gamma / batch as f64;
    for (wi, a) in w.iter_mut().zip(&acc) {
        *wi -= coef * a;
    }
}

fn mean(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vs[0].clone();
    for v in &vs[1..] {
        for (a, b) in m.iter_mut().zip(v) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|a| *a /= vs.len() as f64);
    m
}

/// Plain K-step averaging: every worker runs K steps, then all average.
fn kavg_reference(
    obj: &Objective,
    w0: &[f64],
    p: usize,
    k: usize,
    n: usize,
    gamma: f64,
    b: usize,
    seed: u64,
) -> Vec<f64> {
    let mut w = w0.to_vec();
    for round in 0..n {
        let locals: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let mut wj = w.clone();
                for step in 0..k {
                    reference_step(obj, &mut wj, gamma, b, seed, j, (round * k + step) as u64);
                }
                wj
            })
            .collect();
        w = mean(&locals);
    }
    w
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn assert_same_run(a: &RunResult, b: &RunResult) {
    assert_eq!(bits(&a.final_params), bits(&b.final_params));
    assert_eq!(a, b);
}

#[test]
fn hand_checked_three_round_trajectory() {
    // F = (w1^2 + 2 w2^2)/2, noiseless: each step scales by (1 - gamma * lambda) = (0.75, 0.5)
    let obj =
        ObjectiveSpec::NoisyQuadratic { eigenvalues: vec![1.0, 2.0], minimizer: None, sigma: 0.0 }.build().unwrap();
    let params = constant(2, 2, 1, 2, 3, 2, 0.25, 1, 0);
    let r = sequential_oracle(&params, &obj, &[1.0, 1.0], &RunOptions::default()).unwrap();
    assert_eq!(r.final_params, vec![0.5625f64.powi(3), 0.25f64.powi(3)]);

    let rounds: Vec<(f64, f64)> = r.metrics.per_round.iter().map(|m| (m.loss, m.grad_norm_sq)).collect();
    let at = |a: f64, b: f64| (0.5 * (a * a + 2.0 * b * b), a * a + 4.0 * b * b);
    assert_eq!(rounds, vec![at(1.0, 1.0), at(0.5625, 0.25), at(0.31640625, 0.0625)]);
    let counts: Vec<(u64, u64)> =
        r.metrics.per_round.iter().map(|m| (m.n_local_reductions, m.n_global_reductions)).collect();
    assert_eq!(counts, vec![(2, 1), (4, 2), (6, 3)]);

    let steps: Vec<f64> = r.metrics.per_step.iter().map(|m| m.grad_norm_sq).collect();
    assert_eq!(steps.len(), 6);
    assert_eq!(steps[1], at(0.75, 0.5).1);
    assert_eq!(steps[3], at(0.5625 * 0.75, 0.25 * 0.5).1);
    assert_eq!(r.total_steps, 6);

    let engine = run_hier_avg(&params, &obj, &[1.0, 1.0], &RunOptions::default()).unwrap();
    assert_same_run(&engine, &r);
}

#[test]
fn single_worker_is_plain_sgd() {
    let obj = quadratic(3, 0.2);
    let params = constant(1, 1, 2, 6, 4, 3, 0.1, 3, 9);
    let r = run_hier_avg(&params, &obj, &w0(3), &RunOptions::default()).unwrap();
    let mut w = w0(3);
    for t in 0..24 {
        reference_step(&obj, &mut w, 0.1, 3, 9, 0, t);
    }
    assert_eq!(bits(&r.final_params), bits(&w));
}

#[test]
fn equal_intervals_collapse_to_kavg() {
    let obj = quadratic(4, 0.5);
    for (p, s) in [(4, 1), (4, 2), (4, 4), (6, 3)] {
        let reference = kavg_reference(&obj, &w0(4), p, 3, 5, 0.05, 2, 11);

        // singleton groups: every local average is the identity
        let singleton = run_hier_avg(&constant(p, 1, 3, 3, 5, 4, 0.05, 2, 11), &obj, &w0(4), &RunOptions::default());
        assert_eq!(bits(&singleton.unwrap().final_params), bits(&reference));

        // eliding the local average that precedes each global average
        let mut raw = HyperParams::constant(p, s, 3, 3, 5, 4, 0.05, 2, 11);
        raw.elide_redundant_local_avg = true;
        let elided = run_hier_avg(&raw.validate().unwrap(), &obj, &w0(4), &RunOptions::default()).unwrap();
        assert_eq!(bits(&elided.final_params), bits(&reference));

        // literal schedule: the mean of group means equals the mean up to rounding
        let literal = run_hier_avg(&constant(p, s, 3, 3, 5, 4, 0.05, 2, 11), &obj, &w0(4), &RunOptions::default());
        for (a, b) in literal.unwrap().final_params.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn unit_intervals_match_large_batch_sgd() {
    let obj = quadratic(3, 0.4);
    let (p, b, n, gamma, seed) = (4, 2, 20, 0.1, 5);
    let r = run_hier_avg(&constant(p, 1, 1, 1, n, 3, gamma, b, seed), &obj, &w0(3), &RunOptions::default()).unwrap();

    // same arithmetic order as P workers each applying their own B samples
    let mut w = w0(3);
    // one step over all P*B samples at once
    let mut flat = w0(3);
    for t in 0..n as u64 {
        let per_worker: Vec<Vec<f64>> = (0..p)
            .map(|j| {
                let mut wj = w.clone();
                reference_step(&obj, &mut wj, gamma, b, seed, j, t);
                wj
            })
            .collect();
        w = mean(&per_worker);

        let mut acc = vec![0.0; 3];
        for j in 0..p {
            for s in 0..b {
                obj.as_dyn().add_sample_gradient(&flat, SampleKey::new(seed, j, t, s), &mut acc);
            }
        }
        for (x, a) in flat.iter_mut().zip(&acc) {
            *x -= gamma / (p * b) as f64 * a;
        }
    }
    assert_eq!(bits(&r.final_params), bits(&w));
    for (a, b) in r.final_params.iter().zip(&flat) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let obj = logistic(5);
    let params = constant(8, 4, 2, 8, 6, 5, 0.2, 3, 21);
    let opts = |threads| RunOptions { threads, metric_stride: 1, record_drift: true };
    let one = run_hier_avg(&params, &obj, &[0.0; 5], &opts(1)).unwrap();
    let eight = run_hier_avg(&params, &obj, &[0.0; 5], &opts(8)).unwrap();
    assert_same_run(&one, &eight);
    let again = run_hier_avg(&params, &obj, &[0.0; 5], &opts(1)).unwrap();
    assert_same_run(&one, &again);
    let other_seed = run_hier_avg(&params.with_seed(22), &obj, &[0.0; 5], &opts(1)).unwrap();
    assert_ne!(one.final_params, other_seed.final_params);
}

#[test]
fn metric_gluing_and_stride() {
    let obj = quadratic(3, 0.3);
    let params = constant(4, 2, 2, 6, 5, 3, 0.1, 1, 3);
    let full = run_hier_avg(&params, &obj, &w0(3), &RunOptions::default()).unwrap();
    assert_eq!(full.metrics.per_step.len(), 30);
    assert_eq!(full.metrics.per_round.len(), 5);
    for round in &full.metrics.per_round {
        let t = (round.round - 1) * 6;
        assert_eq!(full.metrics.per_step[t].step, t as u64);
        assert_eq!(full.metrics.per_step[t].grad_norm_sq, round.grad_norm_sq);
    }

    let strided = run_hier_avg(&params, &obj, &w0(3), &RunOptions { metric_stride: 4, ..Default::default() }).unwrap();
    let expect: Vec<_> = full.metrics.per_step.iter().filter(|m| m.step % 4 == 0).cloned().collect();
    assert_eq!(strided.metrics.per_step, expect);
    assert_eq!(strided.metrics.per_round, full.metrics.per_round);
    assert_eq!(bits(&strided.final_params), bits(&full.final_params));
}

#[derive(Default)]
struct Invariants {
    local_calls: usize,
    global_calls: usize,
    max_mean_shift: f64,
    group_size: usize,
}

impl RunObserver for Invariants {
    fn observes_local_averages(&self) -> bool {
        true
    }

    fn on_local_average(&mut self, _round: usize, _block: usize, before: &[WorkerState], after: &[WorkerState]) {
        self.local_calls += 1;
        let all = |ws: &[WorkerState]| mean(&ws.iter().map(|w| w.params.clone()).collect::<Vec<_>>());
        for (a, b) in all(before).iter().zip(all(after)) {
            self.max_mean_shift = self.max_mean_shift.max((a - b).abs());
        }
        for group in after.chunks(self.group_size) {
            assert!(group.iter().all(|w| bits(&w.params) == bits(&group[0].params)));
        }
    }

    fn on_global_average(&mut self, _round: usize, synchronized: &[f64], workers: &[WorkerState]) {
        self.global_calls += 1;
        assert!(workers.iter().all(|w| bits(&w.params) == bits(synchronized)));
    }
}

#[test]
fn reductions_synchronize_and_conserve_the_mean() {
    let obj = nonconvex(6);
    let params = constant(8, 4, 2, 8, 10, 6, 0.1, 2, 4);
    let mut inv = Invariants { group_size: 4, ..Default::default() };
    let r = run_hier_avg_observed(&params, &obj, &w0(6), &RunOptions::default(), &mut inv).unwrap();
    assert_eq!(inv.local_calls, 40);
    assert_eq!(inv.global_calls, 10);
    assert!(inv.max_mean_shift <= 1e-12);
    assert_eq!(r.ledger.n_local_reductions, 40);
}

#[test]
fn relaxed_mode_truncates_last_block() {
    let obj = quadratic(2, 0.1);
    let mut raw = HyperParams::constant(4, 2, 4, 10, 3, 2, 0.1, 1, 8);
    raw.strict = false;
    let params = raw.validate().unwrap();
    let mut inv = Invariants { group_size: 2, ..Default::default() };
    let r = run_hier_avg_observed(&params, &obj, &w0(2), &RunOptions::default(), &mut inv).unwrap();
    assert_eq!(inv.local_calls, 9);
    assert_eq!(r.total_steps, 30);
    assert_eq!(r.metrics.per_step.len(), 30);
    let oracle = sequential_oracle(&params, &obj, &w0(2), &RunOptions::default()).unwrap();
    assert_same_run(&r, &oracle);
}

#[test]
fn schedules_change_step_size_per_round() {
    let obj = quadratic(2, 0.0);
    let mut raw = HyperParams::constant(2, 1, 1, 2, 4, 2, 0.2, 1, 0);
    raw.gamma_schedule.push(hieravg_core::Breakpoint { from_round: 3, value: 0.1 });
    raw.batch_schedule.push(hieravg_core::Breakpoint { from_round: 2, value: 3 });
    let params = raw.validate().unwrap();
    let r = run_hier_avg(&params, &obj, &w0(2), &RunOptions::default()).unwrap();
    let mut w = w0(2);
    for t in 0..8u64 {
        let gamma = if t < 4 { 0.2 } else { 0.1 };
        let b = if t < 2 { 1 } else { 3 };
        reference_step(&obj, &mut w, gamma, b, 0, 0, t);
    }
    assert_eq!(bits(&r.final_params), bits(&w));
}

#[test]
fn noiseless_start_at_minimizer_never_drifts() {
    let obj = quadratic(3, 0.0);
    let params = constant(4, 2, 2, 8, 3, 3, 0.1, 1, 0);
    let r = run_hier_avg(&params, &obj, &[0.0; 3], &RunOptions { record_drift: true, ..Default::default() }).unwrap();
    let c = obj.constants(&[0.0; 3], &Default::default()).unwrap();
    let report = drift_diagnostic(std::slice::from_ref(&r), &c, &params).unwrap();
    assert_eq!(report.rows.len(), 8);
    assert!(report.rows.iter().all(|row| row.measured == 0.0 && row.bound == 0.0));
    assert_eq!((report.rows[0].measured, report.rows[0].bound), (0.0, 0.0));
    assert_eq!(report.violations(), 0);

    let plain = run_hier_avg(&params, &obj, &[0.0; 3], &RunOptions::default()).unwrap();
    assert!(matches!(
        drift_diagnostic(std::slice::from_ref(&plain), &c, &params),
        Err(hieravg_core::Error::MissingDriftSeries)
    ));
}

#[test]
fn drift_bound_holds_on_average() {
    let obj = quadratic(8, 0.5);
    let params = constant(8, 4, 2, 8, 5, 8, 0.05, 2, 0);
    let c: ObjectiveConstants = obj.constants(&w0(8), &Default::default()).unwrap();
    let runs: Vec<RunResult> = (0..40)
        .map(|seed| {
            let opts = RunOptions { record_drift: true, ..Default::default() };
            run_hier_avg(&params.with_seed(seed), &obj, &w0(8), &opts).unwrap()
        })
        .collect();
    let report = drift_diagnostic(&runs, &c, &params).unwrap();
    assert_eq!(report.violations(), 0, "{:?}", report.rows);
    assert!(report.rows[1..].iter().all(|r| r.measured > 0.0));
}

#[test]
fn loss_decreases_on_average_under_small_steps() {
    let obj = quadratic(4, 0.3);
    let params = constant(4, 2, 2, 4, 8, 4, 0.2, 2, 0);
    let start = vec![2.0; 4];
    let mut mean_loss = vec![0.0; 8];
    for seed in 0..20 {
        let r = run_hier_avg(&params.with_seed(seed), &obj, &start, &RunOptions::default()).unwrap();
        for (acc, m) in mean_loss.iter_mut().zip(&r.metrics.per_round) {
            *acc += m.loss / 20.0;
        }
    }
    assert!(mean_loss.windows(2).all(|w| w[1] <= w[0]), "{mean_loss:?}");
}

#[test]
fn rejects_mismatched_dimensions() {
    let obj = quadratic(3, 0.1);
    let params = constant(2, 1, 1, 2, 2, 3, 0.1, 1, 0);
    assert!(run_hier_avg(&params, &obj, &[0.0; 2], &RunOptions::default()).is_err());
    let wrong_d = constant(2, 1, 1, 2, 2, 4, 0.1, 1, 0);
    assert!(sequential_oracle(&wrong_d, &obj, &[0.0; 3], &RunOptions::default()).is_err());
}

fn arb_run() -> impl Strategy<Value = (ValidatedParams, usize, usize, bool)> {
    (
        1usize..4,
        0usize..3,
        1usize..4,
        1usize..4,
        1usize..4,
        1usize..5,
        1usize..4,
        any::<u64>(),
        0usize..3,
        1usize..5,
        any::<bool>(),
    )
        .prop_map(|(groups, sexp, k1, beta, n, d, b, seed, obj, stride, drift)| {
            let s = 1 << sexp;
            let p = groups * s;
            let mut raw = HyperParams::constant(p, s, k1, k1 * beta, n, d, 0.1, b, seed);
            raw.elide_redundant_local_avg = seed % 3 == 0;
            (raw.validate().unwrap(), obj, stride, drift)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn engine_matches_oracle((params, which, stride, drift) in arb_run()) {
        let d = params.dim();
        let obj = match which {
            0 => quadratic(d, 0.3),
            1 => logistic(d),
            _ => nonconvex(d),
        };
        let opts = RunOptions { threads: 1, metric_stride: stride, record_drift: drift };
        let oracle = sequential_oracle(&params, &obj, &w0(d), &opts).unwrap();
        let engine = run_hier_avg(&params, &obj, &w0(d), &opts).unwrap();
        prop_assert_eq!(&engine, &oracle);
        let threaded = run_hier_avg(&params, &obj, &w0(d), &RunOptions { threads: 3, ..opts }).unwrap();
        prop_assert_eq!(&threaded, &oracle);
        prop_assert_eq!(engine.ledger.n_global_reductions, params.rounds() as u64);
    }
}
