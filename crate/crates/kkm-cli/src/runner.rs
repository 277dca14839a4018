//! Executes a resolved run plan: builds the kernel once (timed), runs the
//! requested solver over `repeats` seeds, appends one CSV row per repeat,
//! and writes a JSON document with per-iteration detail.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use kkm::kernels::{Kernel, KernelSpec};
use kkm::metrics::{ari, nmi};
use kkm::oracle::DenseState;
use kkm::solver::euclidean::{euclidean_minibatch_fit, lloyd_fit};
use kkm::solver::full::{full_batch_fit, FullBatchConfig};
use kkm::solver::minibatch::{
    apply_partition, minibatch_fit, minibatch_step, IpState, MiniBatchConfig,
};
use kkm::solver::truncated::{
    center_gap_vs_state, tau_auto, truncated_fit, truncated_step, TauSpec, TruncatedConfig,
    TruncatedState,
};
use kkm::solver::{sample_batch, LearningRate, LrState, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::config::{Algo, RunPlan};

pub const CSV_HEADER: [&str; 16] = [
    "dataset",
    "algo",
    "kernel",
    "kernel_params",
    "k",
    "b",
    "tau",
    "epsilon",
    "lr",
    "seed",
    "iters_run",
    "kernel_build_ms",
    "cluster_ms",
    "final_cost",
    "ari",
    "nmi",
];

fn lr_str(lr: LearningRate) -> &'static str {
    match lr {
        LearningRate::SqrtRatio => "sqrt",
        LearningRate::CountBased => "count",
    }
}

fn stop_str(stop: StopRule) -> &'static str {
    match stop {
        StopRule::Improvement => "improvement",
        StopRule::PrintedLiteral => "printed-literal",
    }
}

fn init_str(init: &kkm::init::Init) -> String {
    match init {
        kkm::init::Init::KmeansPp => "kpp".into(),
        kkm::init::Init::Uniform => "uniform".into(),
        kkm::init::Init::Indices(ix) => format!("indices:{ix:?}"),
    }
}

/// Result of one seeded repeat, in both CSV-row and JSON-report form.
struct RepeatOutcome {
    labels: Vec<u32>,
    init_indices: Vec<usize>,
    iters_run: usize,
    cluster_ms: f64,
    final_cost: f64,
    tau: Option<usize>,
    stopped_early: Option<bool>,
    converged: Option<bool>,
    costs: Vec<f64>,
    improvements: Vec<f64>,
    iter_ms: Vec<f64>,
}

#[derive(Serialize)]
struct OracleReport {
    kind: &'static str,
    iters: usize,
    max_deviation: f64,
}

#[derive(Serialize)]
struct RepeatReport {
    seed: u64,
    iters_run: usize,
    cluster_ms: f64,
    final_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stopped_early: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    init_indices: Vec<usize>,
    labels: Vec<u32>,
    costs: Vec<f64>,
    improvements: Vec<f64>,
    iter_ms: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleReport>,
}

#[derive(Serialize)]
struct ConfigEcho {
    dataset: String,
    n: usize,
    d: usize,
    algo: &'static str,
    kernel: String,
    kernel_params: String,
    k: usize,
    b: usize,
    tau: String,
    epsilon: f64,
    iters: usize,
    lr: &'static str,
    stop: &'static str,
    init: String,
    tol: f64,
    seed: u64,
    repeats: usize,
    materialize_gram: bool,
    oracle_check: bool,
    gram_row_budget: usize,
    incremental_self_ip: bool,
    run_to_cap: bool,
}

#[derive(Serialize)]
struct RunDocument {
    config: ConfigEcho,
    kernel_build_ms: f64,
    repeats: Vec<RepeatReport>,
}

pub fn run(plan: &RunPlan) -> Result<()> {
    let n = plan.dataset.n();

    let build_start = Instant::now();
    let spec = match &plan.kernel_builder {
        Some(builder) => {
            let base = builder.build(&plan.dataset)?;
            if plan.materialize_gram && !matches!(base, KernelSpec::Precomputed(_)) {
                let kernel = Kernel::new(&base, &plan.dataset)?;
                Some(KernelSpec::precomputed(kernel.materialize())?)
            } else {
                Some(base)
            }
        }
        None => None,
    };
    let kernel_build_ms = build_start.elapsed().as_secs_f64() * 1000.0;
    let kernel = match &spec {
        Some(s) => Some(Kernel::new(s, &plan.dataset)?),
        None => None,
    };

    // Euclidean baselines draw their starting points with exact Euclidean
    // D^2 sampling, which is k-means++ under the linear kernel.
    let lin_spec = KernelSpec::Linear;
    let lin_kernel = if plan.algo.is_euclidean() {
        Some(Kernel::new(&lin_spec, &plan.dataset)?)
    } else {
        None
    };

    println!(
        "dataset={} n={} d={} algo={} kernel={}{}",
        plan.dataset_desc,
        n,
        plan.dataset.d(),
        plan.algo.as_str(),
        plan.kernel_kind,
        if plan.kernel_params.is_empty() {
            String::new()
        } else {
            format!("({})", plan.kernel_params)
        }
    );

    let mut reports = Vec::with_capacity(plan.repeats);
    let mut rows: Vec<Vec<String>> = Vec::with_capacity(plan.repeats);
    for r in 0..plan.repeats {
        let seed = plan.seed + r as u64;
        let oracle = if plan.oracle_check {
            match plan.algo {
                Algo::MiniBatch => Some(oracle_check_minibatch(
                    kernel.as_ref().unwrap(),
                    plan,
                    seed,
                )?),
                Algo::Truncated => Some(oracle_check_truncated(
                    kernel.as_ref().unwrap(),
                    plan,
                    seed,
                )?),
                _ => {
                    eprintln!("note: --oracle-check applies to mini-batch and truncated runs only");
                    None
                }
            }
        } else {
            None
        };

        let outcome = run_repeat(plan, kernel.as_ref(), lin_kernel.as_ref(), &spec, seed)?;
        let (ari_v, nmi_v) = match plan.dataset.labels() {
            Some(truth) => (
                Some(ari(&outcome.labels, truth)?),
                Some(nmi(&outcome.labels, truth)?),
            ),
            None => (None, None),
        };

        println!(
            "repeat {r}: seed={seed} iters={} cluster_ms={:.1} final_cost={}{}",
            outcome.iters_run,
            outcome.cluster_ms,
            outcome.final_cost,
            match ari_v {
                Some(a) => format!(" ari={a:.4}"),
                None => String::new(),
            }
        );
        if let Some(o) = &oracle {
            println!(
                "repeat {r}: oracle {} over {} iters: {:e}",
                o.kind, o.iters, o.max_deviation
            );
        }

        rows.push(csv_row(plan, seed, kernel_build_ms, &outcome, ari_v, nmi_v));
        reports.push(RepeatReport {
            seed,
            iters_run: outcome.iters_run,
            cluster_ms: outcome.cluster_ms,
            final_cost: outcome.final_cost,
            ari: ari_v,
            nmi: nmi_v,
            tau: outcome.tau,
            stopped_early: outcome.stopped_early,
            converged: outcome.converged,
            init_indices: outcome.init_indices,
            labels: outcome.labels,
            costs: outcome.costs,
            improvements: outcome.improvements,
            iter_ms: outcome.iter_ms,
            oracle,
        });
    }

    append_csv(&plan.out, &rows)?;
    println!("appended {} row(s) to {}", rows.len(), plan.out.display());

    let doc = RunDocument {
        config: ConfigEcho {
            dataset: plan.dataset_desc.clone(),
            n,
            d: plan.dataset.d(),
            algo: plan.algo.as_str(),
            kernel: plan.kernel_kind.clone(),
            kernel_params: plan.kernel_params.clone(),
            k: plan.k,
            b: plan.b,
            tau: match plan.tau {
                TauSpec::Auto => "auto".into(),
                TauSpec::Fixed(t) => t.to_string(),
            },
            epsilon: plan.epsilon,
            iters: plan.max_iters,
            lr: lr_str(plan.lr),
            stop: stop_str(plan.stop),
            init: init_str(&plan.init),
            tol: plan.tol,
            seed: plan.seed,
            repeats: plan.repeats,
            materialize_gram: plan.materialize_gram,
            oracle_check: plan.oracle_check,
            gram_row_budget: plan.gram_row_budget,
            incremental_self_ip: plan.incremental_self_ip,
            run_to_cap: plan.run_to_cap,
        },
        kernel_build_ms,
        repeats: reports,
    };
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(&plan.json_out, json)
        .with_context(|| format!("writing {}", plan.json_out.display()))?;
    println!("report written to {}", plan.json_out.display());
    Ok(())
}

fn run_repeat(
    plan: &RunPlan,
    kernel: Option<&Kernel>,
    lin_kernel: Option<&Kernel>,
    spec: &Option<KernelSpec>,
    seed: u64,
) -> Result<RepeatOutcome> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match plan.algo {
        Algo::FullBatch => {
            let kernel = kernel.ok_or_else(|| anyhow!("full-batch needs a kernel"))?;
            let mut cfg = FullBatchConfig::new(plan.k, plan.max_iters);
            cfg.tol = plan.tol;
            cfg.init = plan.init.clone();
            cfg.gram_row_budget = plan.gram_row_budget;
            cfg.run_to_cap = plan.run_to_cap;
            let gram = spec.as_ref().and_then(|s| s.precomputed_matrix());
            let start = Instant::now();
            let fit = full_batch_fit(kernel, &cfg, &mut rng, gram)?;
            let cluster_ms = start.elapsed().as_secs_f64() * 1000.0;
            let final_cost = *fit.costs.last().expect("at least one iteration");
            Ok(RepeatOutcome {
                labels: fit.labels,
                init_indices: fit.init_indices,
                iters_run: fit.iters_run,
                cluster_ms,
                final_cost,
                tau: None,
                stopped_early: None,
                converged: Some(fit.converged),
                costs: fit.costs,
                improvements: Vec::new(),
                iter_ms: fit.iter_ms,
            })
        }
        Algo::MiniBatch => {
            let kernel = kernel.ok_or_else(|| anyhow!("mini-batch needs a kernel"))?;
            let cfg = MiniBatchConfig {
                k: plan.k,
                b: plan.b,
                max_iters: plan.max_iters,
                epsilon: plan.epsilon,
                lr: plan.lr,
                stop: plan.stop,
                init: plan.init.clone(),
            };
            let start = Instant::now();
            let fit = minibatch_fit(kernel, &cfg, &mut rng)?;
            let cluster_ms = start.elapsed().as_secs_f64() * 1000.0;
            let all: Vec<usize> = (0..kernel.n()).collect();
            let final_cost = fit.state.batch_cost(kernel, &all);
            Ok(RepeatOutcome {
                labels: fit.labels,
                init_indices: fit.init_indices,
                iters_run: fit.iters_run,
                cluster_ms,
                final_cost,
                tau: None,
                stopped_early: Some(fit.stopped_early),
                converged: None,
                costs: fit.batch_costs,
                improvements: fit.improvements,
                iter_ms: fit.iter_ms,
            })
        }
        Algo::Truncated => {
            let kernel = kernel.ok_or_else(|| anyhow!("truncated needs a kernel"))?;
            let cfg = TruncatedConfig {
                k: plan.k,
                b: plan.b,
                tau: plan.tau,
                max_iters: plan.max_iters,
                epsilon: plan.epsilon,
                lr: plan.lr,
                stop: plan.stop,
                init: plan.init.clone(),
                incremental_self_ip: plan.incremental_self_ip,
            };
            let start = Instant::now();
            let fit = truncated_fit(kernel, &cfg, &mut rng)?;
            let cluster_ms = start.elapsed().as_secs_f64() * 1000.0;
            let final_cost = fit.state.full_cost(kernel);
            Ok(RepeatOutcome {
                labels: fit.labels,
                init_indices: fit.init_indices,
                iters_run: fit.iters_run,
                cluster_ms,
                final_cost,
                tau: Some(fit.tau),
                stopped_early: Some(fit.stopped_early),
                converged: None,
                costs: fit.batch_costs,
                improvements: fit.improvements,
                iter_ms: fit.iter_ms,
            })
        }
        Algo::Lloyd => {
            let lin = lin_kernel.expect("linear kernel prepared for euclidean algos");
            let init_indices = plan.init.choose(lin, plan.k, &mut rng)?;
            let start = Instant::now();
            let fit = lloyd_fit(&plan.dataset, &init_indices, plan.max_iters, plan.tol)?;
            let cluster_ms = start.elapsed().as_secs_f64() * 1000.0;
            let final_cost = *fit.costs.last().expect("at least one iteration");
            Ok(RepeatOutcome {
                labels: fit.labels,
                init_indices,
                iters_run: fit.iters_run,
                cluster_ms,
                final_cost,
                tau: None,
                stopped_early: None,
                converged: Some(fit.converged),
                costs: fit.costs,
                improvements: Vec::new(),
                iter_ms: Vec::new(),
            })
        }
        Algo::EuclideanMiniBatch => {
            let lin = lin_kernel.expect("linear kernel prepared for euclidean algos");
            let init_indices = plan.init.choose(lin, plan.k, &mut rng)?;
            let start = Instant::now();
            let fit = euclidean_minibatch_fit(
                &plan.dataset,
                &init_indices,
                plan.b,
                plan.max_iters,
                plan.epsilon,
                plan.lr,
                plan.stop,
                &mut rng,
            )?;
            let cluster_ms = start.elapsed().as_secs_f64() * 1000.0;
            Ok(RepeatOutcome {
                labels: fit.labels,
                init_indices,
                iters_run: fit.iters_run,
                cluster_ms,
                final_cost: fit.final_cost,
                tau: None,
                stopped_early: Some(fit.stopped_early),
                converged: None,
                costs: fit.batch_costs,
                improvements: fit.improvements,
                iter_ms: Vec::new(),
            })
        }
    }
}

fn csv_row(
    plan: &RunPlan,
    seed: u64,
    kernel_build_ms: f64,
    outcome: &RepeatOutcome,
    ari_v: Option<f64>,
    nmi_v: Option<f64>,
) -> Vec<String> {
    let batchy = plan.algo.uses_batches();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        plan.dataset_desc.clone(),
        plan.algo.as_str().to_string(),
        plan.kernel_kind.clone(),
        plan.kernel_params.clone(),
        plan.k.to_string(),
        if batchy {
            plan.b.to_string()
        } else {
            String::new()
        },
        outcome.tau.map(|t| t.to_string()).unwrap_or_default(),
        if batchy {
            plan.epsilon.to_string()
        } else {
            String::new()
        },
        if batchy {
            lr_str(plan.lr).to_string()
        } else {
            String::new()
        },
        seed.to_string(),
        outcome.iters_run.to_string(),
        format!("{kernel_build_ms:.3}"),
        format!("{:.3}", outcome.cluster_ms),
        outcome.final_cost.to_string(),
        opt(ari_v),
        opt(nmi_v),
    ]
}

fn append_csv(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let existing = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    if existing == 0 {
        wtr.write_record(CSV_HEADER)?;
    }
    for row in rows {
        wtr.write_record(row)?;
    }
    let buf = wtr.into_inner().context("flushing csv buffer")?;
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    file.write_all(&buf)?;
    Ok(())
}

/// Caps on the opt-in oracle pass: it exists to flag bookkeeping drift, not
/// to re-run the whole experiment against a quadratic-cost reference.
const ORACLE_ITERS: usize = 30;
const ORACLE_PROBE_ROWS: usize = 32;

/// Replays the mini-batch run against a dense-weight reference that stores
/// every center as explicit point weights, and reports the largest relative
/// deviation seen in any probed inner product or center norm.
fn oracle_check_minibatch(kernel: &Kernel, plan: &RunPlan, seed: u64) -> Result<OracleReport> {
    let n = kernel.n();
    let iters = plan.max_iters.min(ORACLE_ITERS);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let init = plan.init.choose(kernel, plan.k, &mut rng)?;
    let mut state = IpState::from_indices(kernel, &init);
    let mut dense = DenseState::from_indices(n, &init);
    let mut lr = LrState::new(plan.lr, plan.k);
    let probe_step = (n / ORACLE_PROBE_ROWS).max(1);

    let mut max_dev: f64 = 0.0;
    for _ in 0..iters {
        let batch = sample_batch(&mut rng, n, plan.b);
        let stats = minibatch_step(kernel, &mut state, batch, &mut lr);
        dense.apply(&stats.batch, &stats.batch_labels, &stats.alphas);
        for j in 0..plan.k {
            let want = dense.cc(kernel, j);
            let got = state.cc()[j];
            max_dev = max_dev.max((got - want).abs() / want.abs().max(1e-9));
            for x in (0..n).step_by(probe_step) {
                let want = dense.ip(kernel, x, j);
                let got = state.ip_row(x)[j];
                max_dev = max_dev.max((got - want).abs() / want.abs().max(1e-9));
            }
        }
    }
    Ok(OracleReport {
        kind: "mini-batch vs dense-weight reference (rel dev)",
        iters,
        max_deviation: max_dev,
    })
}

/// Replays the truncated run next to an exact (untruncated) mini-batch state
/// driven by the same batches and step sizes, and reports the largest RKHS
/// distance between paired centers. This gap is the quantity the truncation
/// budget controls; it is reported, not asserted.
fn oracle_check_truncated(kernel: &Kernel, plan: &RunPlan, seed: u64) -> Result<OracleReport> {
    let n = kernel.n();
    let iters = plan.max_iters.min(ORACLE_ITERS);
    let tau = match plan.tau {
        TauSpec::Fixed(t) => t,
        TauSpec::Auto => {
            tau_auto(plan.b, kernel.compute_gamma().value, plan.epsilon).map_err(|e| anyhow!(e))?
        }
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let init = plan.init.choose(kernel, plan.k, &mut rng)?;
    let mut trunc = TruncatedState::new(kernel, &init, tau, plan.incremental_self_ip)?;
    let mut exact = IpState::from_indices(kernel, &init);
    let mut lr = LrState::new(plan.lr, plan.k);

    let mut max_gap: f64 = 0.0;
    for _ in 0..iters {
        let batch = sample_batch(&mut rng, n, plan.b);
        let stats = truncated_step(kernel, &mut trunc, batch, &mut lr);
        apply_partition(
            kernel,
            &mut exact,
            &stats.batch,
            &stats.batch_labels,
            &stats.alphas,
        );
        for j in 0..plan.k {
            max_gap = max_gap.max(center_gap_vs_state(&exact, j, &trunc.centers[j]));
        }
    }
    Ok(OracleReport {
        kind: "truncated vs exact centers (RKHS gap)",
        iters,
        max_deviation: max_gap,
    })
}
