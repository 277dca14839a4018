//! Experiment configuration: a JSON document, every field overridable by a
//! CLI flag of the same name. Flags win over the file; anything left unset
//! falls back to a documented default.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use kkm::data::{self, Dataset, HeatVariant};
use kkm::init::Init;
use kkm::kernels::KernelSpec;
use kkm::matrix::{read_kkm1, read_matrix_csv};
use kkm::solver::truncated::TauSpec;
use kkm::solver::{LearningRate, StopRule};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    /// Full-batch kernel Lloyd iterations.
    FullBatch,
    /// Mini-batch kernel k-means with dataset-wide inner-product tracking.
    MiniBatch,
    /// Mini-batch kernel k-means with truncated window centers.
    Truncated,
    /// Euclidean Lloyd baseline (ignores the kernel flags).
    Lloyd,
    /// Euclidean mini-batch baseline (ignores the kernel flags).
    EuclideanMiniBatch,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::FullBatch => "full-batch",
            Algo::MiniBatch => "mini-batch",
            Algo::Truncated => "truncated",
            Algo::Lloyd => "lloyd",
            Algo::EuclideanMiniBatch => "euclidean-mini-batch",
        }
    }

    pub fn is_euclidean(self) -> bool {
        matches!(self, Algo::Lloyd | Algo::EuclideanMiniBatch)
    }

    pub fn uses_batches(self) -> bool {
        matches!(
            self,
            Algo::MiniBatch | Algo::Truncated | Algo::EuclideanMiniBatch
        )
    }
}

fn parse_algo(s: &str) -> Result<Algo> {
    Algo::from_str(s, true).map_err(|e| anyhow!("bad algo `{s}`: {e}"))
}

/// Flags shared by `run` and `gamma`. Field names match the JSON config.
#[derive(Debug, Args, Default, Clone)]
pub struct CommonFlags {
    /// Dataset descriptor: blobs:n=..,k=..[,d=..,spread=..,seed=..] |
    /// circles:n=..,r=R1+R2[,noise=..,seed=..] | standin:pendigits |
    /// csv:path=FILE[,label=COLUMN]
    #[arg(long)]
    pub dataset: Option<String>,
    /// Kernel kind: gaussian | linear | poly | knn | heat | precomputed
    #[arg(long)]
    pub kernel: Option<String>,
    /// Gaussian bandwidth kappa in exp(-|x-y|^2 / kappa)
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Polynomial degree
    #[arg(long)]
    pub degree: Option<u32>,
    /// Polynomial additive constant
    #[arg(long)]
    pub coef0: Option<f64>,
    /// Neighbor count for the knn and heat kernels
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// Diffusion time for the heat kernel
    #[arg(long)]
    pub t: Option<f64>,
    /// Heat kernel variant: adjacency (exp(tN)) or laplacian (exp(-t(I-N)))
    #[arg(long)]
    pub heat_variant: Option<String>,
    /// Precomputed kernel file (.kkm binary or square numeric .csv)
    #[arg(long)]
    pub kernel_file: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RunFlags {
    /// JSON config file; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonFlags,
    /// Solver to run
    #[arg(long, value_enum)]
    pub algo: Option<Algo>,
    /// Number of clusters
    #[arg(long)]
    pub k: Option<usize>,
    /// Mini-batch size
    #[arg(long)]
    pub b: Option<usize>,
    /// Truncation budget: a point count, or `auto` for b*ln^2(28*gamma/epsilon)
    #[arg(long)]
    pub tau: Option<String>,
    /// Early-stopping threshold on batch-objective improvement (0 disables)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Iteration cap
    #[arg(long)]
    pub iters: Option<usize>,
    /// Learning rate rule: sqrt | count
    #[arg(long)]
    pub lr: Option<String>,
    /// Stopping comparison: improvement | printed-literal
    #[arg(long)]
    pub stop: Option<String>,
    /// Center initialization: kpp | uniform
    #[arg(long)]
    pub init: Option<String>,
    /// Full-batch cost-improvement stopping tolerance (0 = fixed point only)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Base RNG seed; repeat r uses seed + r
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of repeats
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Results CSV path (appended; header written when new)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-run JSON report path (default: out with .json extension)
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Materialize the full n x n Gram matrix up front (O(n^2) memory)
    #[arg(long)]
    pub materialize_gram: bool,
    /// Run the paired brute-force oracle and report deviations
    #[arg(long)]
    pub oracle_check: bool,
    /// Leading rows of the Gram matrix the full-batch solver caches
    #[arg(long)]
    pub gram_row_budget: Option<usize>,
    /// Maintain truncated self inner products incrementally
    #[arg(long)]
    pub incremental_self_ip: bool,
    /// Run full-batch through label fixed points up to the iteration cap
    /// (results unchanged; for iteration-budget benchmarking)
    #[arg(long)]
    pub run_to_cap: bool,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    dataset: Option<String>,
    algo: Option<String>,
    kernel: Option<String>,
    kappa: Option<f64>,
    degree: Option<u32>,
    coef0: Option<f64>,
    knn_k: Option<usize>,
    t: Option<f64>,
    heat_variant: Option<String>,
    kernel_file: Option<PathBuf>,
    k: Option<usize>,
    b: Option<usize>,
    tau: Option<serde_json::Value>,
    epsilon: Option<f64>,
    iters: Option<usize>,
    lr: Option<String>,
    stop: Option<String>,
    init: Option<String>,
    tol: Option<f64>,
    seed: Option<u64>,
    repeats: Option<usize>,
    out: Option<PathBuf>,
    json_out: Option<PathBuf>,
    materialize_gram: Option<bool>,
    oracle_check: Option<bool>,
    gram_row_budget: Option<usize>,
    incremental_self_ip: Option<bool>,
    run_to_cap: Option<bool>,
}

/// Everything the runner needs, validated.
#[derive(Debug)]
pub struct RunPlan {
    pub dataset: Dataset,
    pub dataset_desc: String,
    pub algo: Algo,
    /// None for the Euclidean baselines.
    pub kernel_kind: String,
    pub kernel_params: String,
    pub kernel_builder: Option<KernelBuilder>,
    pub k: usize,
    pub b: usize,
    pub tau: TauSpec,
    pub epsilon: f64,
    pub max_iters: usize,
    pub lr: LearningRate,
    pub stop: StopRule,
    pub init: Init,
    pub tol: f64,
    pub seed: u64,
    pub repeats: usize,
    pub out: PathBuf,
    pub json_out: PathBuf,
    pub materialize_gram: bool,
    pub oracle_check: bool,
    pub gram_row_budget: usize,
    pub incremental_self_ip: bool,
    pub run_to_cap: bool,
}

/// Deferred kernel construction so the runner can time it.
#[derive(Debug)]
pub enum KernelBuilder {
    Ready(KernelSpec),
    Knn {
        k_nn: usize,
    },
    Heat {
        k_nn: usize,
        t: f64,
        variant: HeatVariant,
    },
}

impl KernelBuilder {
    pub fn build(&self, dataset: &Dataset) -> Result<KernelSpec> {
        Ok(match self {
            KernelBuilder::Ready(spec) => spec.clone(),
            KernelBuilder::Knn { k_nn } => data::build_knn_kernel(dataset, *k_nn)?,
            KernelBuilder::Heat { k_nn, t, variant } => {
                data::build_heat_kernel(dataset, *k_nn, *t, *variant)?
            }
        })
    }
}

fn kv_pairs(body: &str) -> Result<Vec<(&str, &str)>> {
    body.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            part.split_once('=')
                .ok_or_else(|| anyhow!("expected key=value, got `{part}`"))
        })
        .collect()
}

pub fn parse_dataset(desc: &str) -> Result<Dataset> {
    let (kind, body) = desc.split_once(':').unwrap_or((desc, ""));
    match kind {
        "blobs" => {
            let (mut n, mut k, mut d, mut spread, mut seed) = (None, None, 2usize, 1.0, 0u64);
            for (key, val) in kv_pairs(body)? {
                match key {
                    "n" => n = Some(val.parse::<usize>()?),
                    "k" => k = Some(val.parse::<usize>()?),
                    "d" => d = val.parse()?,
                    "spread" => spread = val.parse()?,
                    "seed" => seed = val.parse()?,
                    other => bail!("unknown blobs key `{other}`"),
                }
            }
            let n = n.ok_or_else(|| anyhow!("blobs descriptor needs n="))?;
            let k = k.ok_or_else(|| anyhow!("blobs descriptor needs k="))?;
            Ok(data::gen_blobs(n, k, d, spread, seed)?)
        }
        "circles" => {
            let (mut n, mut radii, mut noise, mut seed) = (None, None, 0.0, 0u64);
            for (key, val) in kv_pairs(body)? {
                match key {
                    "n" => n = Some(val.parse::<usize>()?),
                    "r" => {
                        let rs: std::result::Result<Vec<f64>, _> =
                            val.split('+').map(str::parse).collect();
                        radii = Some(rs.with_context(|| format!("bad radii `{val}`"))?);
                    }
                    "noise" => noise = val.parse()?,
                    "seed" => seed = val.parse()?,
                    other => bail!("unknown circles key `{other}`"),
                }
            }
            let n = n.ok_or_else(|| anyhow!("circles descriptor needs n="))?;
            let radii = radii.ok_or_else(|| anyhow!("circles descriptor needs r=R1+R2"))?;
            Ok(data::gen_circles(n, &radii, noise, seed)?)
        }
        "standin" => match body {
            "pendigits" => Ok(data::pendigits_standin()),
            other => bail!("unknown stand-in `{other}` (available: pendigits)"),
        },
        "csv" => {
            let (mut path, mut label) = (None, None);
            if body.contains('=') {
                for (key, val) in kv_pairs(body)? {
                    match key {
                        "path" => path = Some(val.to_string()),
                        "label" => label = Some(val.to_string()),
                        other => bail!("unknown csv key `{other}`"),
                    }
                }
            } else {
                path = Some(body.to_string());
            }
            let path = path.ok_or_else(|| anyhow!("csv descriptor needs a path"))?;
            Ok(data::load_csv(Path::new(&path), label.as_deref())?)
        }
        other => bail!("unknown dataset kind `{other}` (available: blobs, circles, standin, csv)"),
    }
}

fn parse_lr(s: &str) -> Result<LearningRate> {
    match s {
        "sqrt" => Ok(LearningRate::SqrtRatio),
        "count" => Ok(LearningRate::CountBased),
        other => bail!("bad lr `{other}` (sqrt | count)"),
    }
}

fn parse_stop(s: &str) -> Result<StopRule> {
    match s {
        "improvement" => Ok(StopRule::Improvement),
        "printed-literal" => Ok(StopRule::PrintedLiteral),
        other => bail!("bad stop rule `{other}` (improvement | printed-literal)"),
    }
}

fn parse_init(s: &str) -> Result<Init> {
    match s {
        "kpp" => Ok(Init::KmeansPp),
        "uniform" => Ok(Init::Uniform),
        other => bail!("bad init `{other}` (kpp | uniform)"),
    }
}

fn parse_tau(v: &serde_json::Value) -> Result<TauSpec> {
    match v {
        serde_json::Value::String(s) if s == "auto" => Ok(TauSpec::Auto),
        serde_json::Value::Number(num) => {
            let t = num
                .as_u64()
                .ok_or_else(|| anyhow!("tau must be a nonnegative integer, got {num}"))?;
            Ok(TauSpec::Fixed(t as usize))
        }
        other => bail!("bad tau `{other}` (integer or \"auto\")"),
    }
}

fn parse_tau_str(s: &str) -> Result<TauSpec> {
    if s == "auto" {
        Ok(TauSpec::Auto)
    } else {
        Ok(TauSpec::Fixed(
            s.parse().with_context(|| format!("bad tau `{s}`"))?,
        ))
    }
}

pub struct KernelChoice {
    pub kind: String,
    pub params: String,
    pub builder: Option<KernelBuilder>,
}

pub fn resolve_kernel(
    flags: &CommonFlags,
    file: Option<&CommonKernelFields>,
) -> Result<KernelChoice> {
    let get_f64 =
        |flag: Option<f64>, file_v: Option<f64>, default: f64| flag.or(file_v).unwrap_or(default);
    let kind = flags
        .kernel
        .clone()
        .or_else(|| file.and_then(|f| f.kernel.clone()))
        .unwrap_or_else(|| "gaussian".to_string());
    let file_or = |pick: fn(&CommonKernelFields) -> Option<f64>| file.and_then(pick);

    let (params, builder) = match kind.as_str() {
        "gaussian" => {
            let kappa = get_f64(flags.kappa, file_or(|f| f.kappa), 1.0);
            (
                format!("kappa={kappa}"),
                KernelBuilder::Ready(KernelSpec::gaussian(kappa)?),
            )
        }
        "linear" => (String::new(), KernelBuilder::Ready(KernelSpec::Linear)),
        "poly" => {
            let degree = flags
                .degree
                .or_else(|| file.and_then(|f| f.degree))
                .unwrap_or(2);
            let coef0 = get_f64(flags.coef0, file_or(|f| f.coef0), 1.0);
            (
                format!("degree={degree};coef0={coef0}"),
                KernelBuilder::Ready(KernelSpec::polynomial(degree, coef0)?),
            )
        }
        "knn" => {
            let k_nn = flags
                .knn_k
                .or_else(|| file.and_then(|f| f.knn_k))
                .unwrap_or(6);
            (format!("knn_k={k_nn}"), KernelBuilder::Knn { k_nn })
        }
        "heat" => {
            let k_nn = flags
                .knn_k
                .or_else(|| file.and_then(|f| f.knn_k))
                .unwrap_or(6);
            let t = get_f64(flags.t, file_or(|f| f.t), 1.0);
            let variant_name = flags
                .heat_variant
                .clone()
                .or_else(|| file.and_then(|f| f.heat_variant.clone()))
                .unwrap_or_else(|| "adjacency".to_string());
            let variant = match variant_name.as_str() {
                "adjacency" => HeatVariant::Adjacency,
                "laplacian" => HeatVariant::Laplacian,
                other => bail!("bad heat variant `{other}` (adjacency | laplacian)"),
            };
            (
                format!("knn_k={k_nn};t={t};variant={variant_name}"),
                KernelBuilder::Heat { k_nn, t, variant },
            )
        }
        "precomputed" => {
            let path = flags
                .kernel_file
                .clone()
                .or_else(|| file.and_then(|f| f.kernel_file.clone()))
                .ok_or_else(|| anyhow!("precomputed kernel needs --kernel-file"))?;
            let matrix = if path.extension().is_some_and(|e| e == "csv") {
                read_matrix_csv(&path)?
            } else {
                read_kkm1(&path)?
            };
            (
                format!("file={}", path.display()),
                KernelBuilder::Ready(KernelSpec::precomputed(matrix)?),
            )
        }
        other => {
            bail!("unknown kernel `{other}` (gaussian | linear | poly | knn | heat | precomputed)")
        }
    };
    Ok(KernelChoice {
        kind,
        params,
        builder: Some(builder),
    })
}

/// The kernel-related subset of the JSON config, reused by `gamma`.
pub struct CommonKernelFields {
    pub kernel: Option<String>,
    pub kappa: Option<f64>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
    pub knn_k: Option<usize>,
    pub t: Option<f64>,
    pub heat_variant: Option<String>,
    pub kernel_file: Option<PathBuf>,
}

pub fn resolve(flags: RunFlags) -> Result<RunPlan> {
    let file: FileConfig = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let dataset_desc = flags
        .common
        .dataset
        .clone()
        .or_else(|| file.dataset.clone())
        .ok_or_else(|| anyhow!("missing dataset (flag --dataset or config field)"))?;
    let dataset = parse_dataset(&dataset_desc)
        .with_context(|| format!("resolving dataset `{dataset_desc}`"))?;

    let algo = match (flags.algo, file.algo.as_deref()) {
        (Some(a), _) => a,
        (None, Some(s)) => parse_algo(s)?,
        (None, None) => bail!("missing algo (flag --algo or config field)"),
    };

    let k = flags
        .k
        .or(file.k)
        .ok_or_else(|| anyhow!("missing k (flag --k or config field)"))?;

    let kernel_fields = CommonKernelFields {
        kernel: file.kernel.clone(),
        kappa: file.kappa,
        degree: file.degree,
        coef0: file.coef0,
        knn_k: file.knn_k,
        t: file.t,
        heat_variant: file.heat_variant.clone(),
        kernel_file: file.kernel_file.clone(),
    };
    let kernel_choice = if algo.is_euclidean() {
        KernelChoice {
            kind: "none".into(),
            params: String::new(),
            builder: None,
        }
    } else {
        resolve_kernel(&flags.common, Some(&kernel_fields))?
    };

    let tau = match (&flags.tau, &file.tau) {
        (Some(s), _) => parse_tau_str(s)?,
        (None, Some(v)) => parse_tau(v)?,
        (None, None) => TauSpec::Fixed(200),
    };
    let lr = parse_lr(flags.lr.as_deref().or(file.lr.as_deref()).unwrap_or("sqrt"))?;
    let stop = parse_stop(
        flags
            .stop
            .as_deref()
            .or(file.stop.as_deref())
            .unwrap_or("improvement"),
    )?;
    let init = parse_init(
        flags
            .init
            .as_deref()
            .or(file.init.as_deref())
            .unwrap_or("kpp"),
    )?;

    let repeats = flags.repeats.or(file.repeats).unwrap_or(1);
    if repeats == 0 {
        bail!("repeats must be >= 1");
    }
    let b = flags.b.or(file.b).unwrap_or(256);
    if algo.uses_batches() && b == 0 {
        bail!("b must be >= 1 for batch algorithms");
    }
    let out = flags
        .out
        .or(file.out)
        .unwrap_or_else(|| PathBuf::from("results.csv"));
    let json_out = flags
        .json_out
        .or(file.json_out)
        .unwrap_or_else(|| out.with_extension("json"));

    Ok(RunPlan {
        dataset,
        dataset_desc,
        algo,
        kernel_kind: kernel_choice.kind,
        kernel_params: kernel_choice.params,
        kernel_builder: kernel_choice.builder,
        k,
        b,
        tau,
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(0.0),
        max_iters: flags.iters.or(file.iters).unwrap_or(200),
        lr,
        stop,
        init,
        tol: flags.tol.or(file.tol).unwrap_or(0.0),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        repeats,
        out,
        json_out,
        materialize_gram: flags.materialize_gram || file.materialize_gram.unwrap_or(false),
        oracle_check: flags.oracle_check || file.oracle_check.unwrap_or(false),
        gram_row_budget: flags.gram_row_budget.or(file.gram_row_budget).unwrap_or(0),
        incremental_self_ip: flags.incremental_self_ip || file.incremental_self_ip.unwrap_or(false),
        run_to_cap: flags.run_to_cap || file.run_to_cap.unwrap_or(false),
    })
}
