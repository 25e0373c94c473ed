use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hieravg_core::bounds::{k2_advisor, theorem2_bound, DEFAULT_K2_MAX};
use hieravg_core::export::{fmt_f64, write_bounds};
use hieravg_core::stats::{mean, standard_error};
use hieravg_core::{
    comm_tradeoff_report, modeled_time, run_experiment, run_hier_avg, theorem1_schedule, BoundInputs, ExperimentConfig,
    ExperimentOutcome, HyperParams, ValidatedParams,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::plan::{ExperimentPlan, SweepPoint};
use crate::Common;

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&common.config)
        .with_context(|| format!("loading config {}", common.config.display()))?;
    common.apply(&mut config);
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().context("building thread pool")
}

/// Replicate directory: the output directory itself for a single replicate.
fn replicate_dir(dir: &Path, replicates: usize, seed: u64) -> std::path::PathBuf {
    if replicates == 1 {
        dir.to_path_buf()
    } else {
        dir.join(format!("seed_{seed}"))
    }
}

fn describe(o: &ExperimentOutcome) -> String {
    let r = &o.result;
    format!(
        "seed {}: final loss {:.6e}, final |grad F|^2 {:.6e}, {} local / {} global reductions",
        o.params.seed(),
        r.final_loss,
        r.final_grad_norm_sq,
        r.ledger.n_local_reductions,
        r.ledger.n_global_reductions
    )
}

pub fn run(common: &Common) -> Result<bool> {
    let config = load_config(common)?;
    let out = common.out_dir();
    let replicates = common.replicates(1)?;
    let mut losses = Vec::with_capacity(replicates);
    for i in 0..replicates {
        let mut c = config.clone();
        c.hyper.seed = config.hyper.seed.wrapping_add(i as u64);
        let outcome = run_experiment(&c, &c.run_options(common.threads))?;
        let dir = replicate_dir(&out, replicates, c.hyper.seed);
        create_dir(&dir)?;
        outcome.write(&dir).with_context(|| format!("writing results to {}", dir.display()))?;
        println!("{}", describe(&outcome));
        losses.push(outcome.result.final_loss);
    }
    if replicates > 1 {
        println!("mean final loss {:.6e} +- {:.2e} over {replicates} seeds", mean(&losses), standard_error(&losses));
    }
    println!("wrote {}", out.display());
    Ok(true)
}

struct PointSummary {
    point: SweepPoint,
    completed: usize,
    final_loss: Vec<f64>,
    final_grad: Vec<f64>,
    bound: Option<(f64, bool)>,
    ledger: Option<(u64, u64, f64)>,
    error: Option<String>,
}

fn run_point(point: SweepPoint, out: &Path, replicates: usize) -> PointSummary {
    let mut s = PointSummary {
        completed: 0,
        final_loss: Vec::new(),
        final_grad: Vec::new(),
        bound: None,
        ledger: None,
        error: None,
        point,
    };
    let dir = out.join(format!("point_{:04}", s.point.index));
    for i in 0..replicates {
        let mut c = s.point.config.clone();
        c.hyper.seed = s.point.key.seed.wrapping_add(i as u64);
        let result = run_experiment(&c, &c.run_options(1)).map_err(anyhow::Error::from).and_then(|o| {
            let rep = replicate_dir(&dir, replicates, c.hyper.seed);
            create_dir(&rep)?;
            o.write(&rep)?;
            Ok(o)
        });
        match result {
            Ok(o) => {
                s.completed += 1;
                s.final_loss.push(o.result.final_loss);
                s.final_grad.push(o.result.final_grad_norm_sq);
                if s.bound.is_none() {
                    let inputs = BoundInputs::new(&o.constants, &o.params, c.delta_grad_w);
                    s.bound = theorem2_bound(&inputs).ok().map(|b| (b.value, b.conditions_ok()));
                    let dim = o.params.dim();
                    let time = modeled_time(&o.result.ledger, &c.cost_model, dim);
                    s.ledger = Some((o.result.ledger.n_local_reductions, o.result.ledger.n_global_reductions, time));
                }
            }
            Err(e) => {
                s.error = Some(format!("{e:#}"));
                break;
            }
        }
    }
    s
}

const SUMMARY_HEADER: [&str; 20] = [
    "point",
    "K1",
    "K2",
    "S",
    "P",
    "gamma",
    "B",
    "seed",
    "replicates",
    "completed",
    "mean_final_loss",
    "se_final_loss",
    "mean_final_grad_norm_sq",
    "se_final_grad_norm_sq",
    "bound_value",
    "condition_ok",
    "n_local_reductions",
    "n_global_reductions",
    "modeled_comm_time",
    "status",
];

fn write_summary(path: &Path, rows: &[PointSummary], replicates: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SUMMARY_HEADER)?;
    let stat = |xs: &[f64], f: fn(&[f64]) -> f64| if xs.is_empty() { String::new() } else { fmt_f64(f(xs)) };
    for r in rows {
        let k = &r.point.key;
        let (bound, ok) = r.bound.map_or((String::new(), String::new()), |(v, ok)| (fmt_f64(v), ok.to_string()));
        let (nl, ng, t) = r.ledger.map_or((String::new(), String::new(), String::new()), |(l, g, t)| {
            (l.to_string(), g.to_string(), fmt_f64(t))
        });
        let status = match &r.error {
            None => "ok".to_string(),
            Some(e) => format!("error: {e}"),
        };
        w.write_record([
            r.point.index.to_string(),
            k.k1.to_string(),
            k.k2.to_string(),
            k.group_size.to_string(),
            k.workers.to_string(),
            fmt_f64(k.gamma),
            k.batch.to_string(),
            k.seed.to_string(),
            replicates.to_string(),
            r.completed.to_string(),
            stat(&r.final_loss, mean),
            stat(&r.final_loss, standard_error),
            stat(&r.final_grad, mean),
            stat(&r.final_grad, standard_error),
            bound,
            ok,
            nl,
            ng,
            t,
            status,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep(common: &Common) -> Result<bool> {
    let (plan, mut base) = ExperimentPlan::load(&common.config)?;
    common.apply(&mut base);
    let replicates = common.replicates(plan.replicates)?;
    let out = common.out.clone().or_else(|| plan.out.clone()).unwrap_or_else(|| common.out_dir());
    let points = plan.expand(&base, replicates)?;
    create_dir(&out)?;

    let pool = thread_pool(common.threads)?;
    let summaries: Vec<PointSummary> =
        pool.install(|| points.into_par_iter().map(|p| run_point(p, &out, replicates)).collect());
    write_summary(&out.join("summary.csv"), &summaries, replicates)?;

    let failed: Vec<&PointSummary> = summaries.iter().filter(|s| s.error.is_some()).collect();
    for s in &failed {
        eprintln!("point {} failed: {}", s.point.index, s.error.as_deref().unwrap_or_default());
    }
    println!(
        "{} of {} points completed ({replicates} replicates each); summary at {}",
        summaries.len() - failed.len(),
        summaries.len(),
        out.join("summary.csv").display()
    );
    Ok(failed.is_empty())
}

pub fn bounds(common: &Common) -> Result<bool> {
    let config = load_config(common)?;
    let params = config.hyper.validate()?;
    let objective = config.objective.build()?;
    let w0 = config.init.point(objective.dim())?;
    let constants = config.constants_for(&objective, &w0)?;
    let rows = config.grid_rows(&params, &constants)?;

    let out = common.out_dir();
    create_dir(&out)?;
    write_bounds(fs::File::create(out.join("bounds.csv"))?, &rows)?;
    let inputs = BoundInputs::new(&constants, &params, config.delta_grad_w);
    let advisor = k2_advisor(&inputs, params.total_steps(), DEFAULT_K2_MAX)?;
    fs::write(out.join("advisor.json"), serde_json::to_string_pretty(&advisor)?)?;

    if constants.estimated {
        println!("note: M and M_G are sampled estimates");
    }
    let flagged = rows.iter().filter(|r| !r.report.conditions_ok()).count();
    println!("{} bound rows, {flagged} with failing step-size conditions", rows.len());
    println!(
        "K2 advisor at T = {}: condition {} ({:.4e} vs {:.4e}), grid minimum at K2 = {}",
        params.total_steps(),
        if advisor.condition_holds { "holds" } else { "fails" },
        advisor.condition_lhs,
        advisor.condition_rhs,
        advisor.argmin_k2
    );
    let (_, batch) = params.schedule().at(1);
    if let Ok(h) = theorem1_schedule(params.total_steps(), params.workers(), batch) {
        println!("horizon schedule for this T: gamma = {:.4e}, K2 = {} (raw {:.3})", h.gamma, h.k2, h.k2_raw);
    }
    println!("wrote {}", out.display());
    Ok(true)
}

#[derive(Serialize)]
struct SchemeResult {
    scheme: &'static str,
    k1: usize,
    k2: usize,
    s: usize,
    rounds: usize,
    losses: Vec<f64>,
}

fn kavg_params(hier: &ValidatedParams, k: usize) -> Result<ValidatedParams> {
    let t = hier.total_steps();
    if k == 0 || !t.is_multiple_of(k as u64) {
        bail!("K-AVG interval {k} does not divide the {t} total steps");
    }
    let raw: &HyperParams = hier.raw();
    let kavg = HyperParams {
        k1: k,
        k2: k,
        group_size: 1,
        rounds: (t / k as u64) as usize,
        strict: true,
        elide_redundant_local_avg: false,
        ..raw.clone()
    };
    Ok(kavg.validate()?)
}

pub fn compare_kavg(common: &Common, k: Option<usize>) -> Result<bool> {
    let config = load_config(common)?;
    let hier = config.hyper.validate()?;
    if !hier.schedule().is_constant() {
        bail!("compare-kavg needs a constant step size and batch size");
    }
    let k = match k.or(config.compare.map(|c| c.k)) {
        Some(k) => k,
        None => bail!("compare-kavg needs a K-AVG interval (--k or compare.k in the config)"),
    };
    let kavg = kavg_params(&hier, k)?;
    let objective = config.objective.build()?;
    let w0 = config.init.point(objective.dim())?;
    let constants = config.constants_for(&objective, &w0)?;
    let dim = objective.dim();

    let inflation = hier.k2() as f64 / k as f64 - 1.0;
    let inputs = BoundInputs::new(&constants, &hier, config.delta_grad_w);
    let with_bounds = (0.0..=1.0).contains(&inflation) && inputs.gamma > 0.0;
    let report = comm_tradeoff_report(&hier, &kavg, &config.cost_model, dim, with_bounds.then_some(&inputs))?;

    let replicates = common.replicates(1)?;
    let opts = hieravg_core::RunOptions { metric_stride: usize::MAX, ..Default::default() };
    let pool = thread_pool(common.threads)?;
    let losses = |params: &ValidatedParams| -> Result<Vec<f64>> {
        pool.install(|| {
            (0..replicates as u64)
                .into_par_iter()
                .map(|i| {
                    let p = params.with_seed(params.seed().wrapping_add(i));
                    Ok(run_hier_avg(&p, &objective, &w0, &opts)?.final_loss)
                })
                .collect()
        })
    };
    let schemes = [
        SchemeResult {
            scheme: "hierarchical",
            k1: hier.k1(),
            k2: hier.k2(),
            s: hier.group_size(),
            rounds: hier.rounds(),
            losses: losses(&hier)?,
        },
        SchemeResult { scheme: "kavg", k1: k, k2: k, s: 1, rounds: kavg.rounds(), losses: losses(&kavg)? },
    ];

    let out = common.out_dir();
    create_dir(&out)?;
    let mut w = csv::Writer::from_path(out.join("tradeoff.csv"))?;
    w.write_record([
        "scheme",
        "K1",
        "K2",
        "S",
        "P",
        "rounds",
        "total_steps",
        "n_local_reductions",
        "n_global_reductions",
        "bytes_local",
        "bytes_global",
        "modeled_comm_time",
        "replicates",
        "mean_final_loss",
        "se_final_loss",
    ])?;
    for (scheme, ledger, time) in
        [(&schemes[0], &report.hier, report.hier_time), (&schemes[1], &report.kavg, report.kavg_time)]
    {
        w.write_record([
            scheme.scheme.to_string(),
            scheme.k1.to_string(),
            scheme.k2.to_string(),
            scheme.s.to_string(),
            hier.workers().to_string(),
            scheme.rounds.to_string(),
            report.total_steps.to_string(),
            ledger.n_local_reductions.to_string(),
            ledger.n_global_reductions.to_string(),
            ledger.bytes_local.to_string(),
            ledger.bytes_global.to_string(),
            fmt_f64(time),
            replicates.to_string(),
            fmt_f64(mean(&scheme.losses)),
            fmt_f64(standard_error(&scheme.losses)),
        ])?;
    }
    w.flush()?;
    fs::write(out.join("tradeoff.json"), serde_json::to_string_pretty(&report)?)?;

    println!("total steps T = {}", report.total_steps);
    for (scheme, time) in [(&schemes[0], report.hier_time), (&schemes[1], report.kavg_time)] {
        println!(
            "{:<12} K1={:<3} K2={:<3} S={:<3} modeled comm time {:.4e} s, final loss {:.6e} +- {:.2e}",
            scheme.scheme,
            scheme.k1,
            scheme.k2,
            scheme.s,
            time,
            mean(&scheme.losses),
            standard_error(&scheme.losses)
        );
    }
    match report.crossover_ratio {
        Some(r) => println!("costs break even at t_global / t_local = {r:.3}"),
        None => println!("both schemes run the same number of global reductions"),
    }
    match &report.comparison {
        Some(c) => {
            println!(
                "bound comparison at K={k}, a={inflation:.3}: hierarchical {:.4e} vs K-AVG {:.4e} ({})",
                c.hier,
                c.kavg,
                if c.hier_faster { "hierarchical smaller" } else { "K-AVG smaller" }
            );
            if !c.large_parallelism {
                println!("note: L*gamma*P = {:.3} is below the large-parallelism regime", c.l_gamma_p);
            }
        }
        None => println!("bound comparison skipped: inflation a = {inflation:.3} is outside [0, 1]"),
    }
    println!("wrote {}", out.display());
    Ok(true)
}
