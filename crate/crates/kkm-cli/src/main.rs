//! `kkmini`: benchmark CLI for the kernel k-means solvers. Runs seeded
//! experiments, appends per-repeat metric rows to a CSV, and aggregates
//! result files into per-configuration summaries.

mod config;
mod runner;
mod summarize;

use std::path::PathBuf;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use kkm::kernels::Kernel;

#[derive(Parser)]
#[command(name = "kkmini", version, about = "Kernel k-means benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a clustering experiment; appends one CSV row per repeat
    Run(config::RunFlags),
    /// Aggregate a results CSV into per-configuration means and stds
    Summarize {
        /// Results CSV produced by `run`
        input: PathBuf,
        /// Summary CSV to write
        #[arg(long, default_value = "summary.csv")]
        out: PathBuf,
    },
    /// Print a kernel's scale estimate gamma for a dataset
    Gamma {
        #[command(flatten)]
        common: config::CommonFlags,
    },
}

/// KKMINI_THREADS caps the worker pool. Results never depend on it; only
/// wall time does.
fn init_threads() {
    let Ok(raw) = std::env::var("KKMINI_THREADS") else {
        return;
    };
    match raw.parse::<usize>() {
        Ok(threads) if threads >= 1 => {
            #[cfg(feature = "parallel")]
            {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            #[cfg(not(feature = "parallel"))]
            let _ = threads;
        }
        _ => eprintln!("warning: ignoring KKMINI_THREADS={raw} (need a positive integer)"),
    }
}

fn gamma(common: &config::CommonFlags) -> Result<()> {
    let desc = common
        .dataset
        .clone()
        .ok_or_else(|| anyhow!("gamma needs --dataset"))?;
    let dataset = config::parse_dataset(&desc)?;
    let choice = config::resolve_kernel(common, None)?;
    let spec = choice
        .builder
        .expect("resolve_kernel always yields a builder")
        .build(&dataset)?;
    let kernel = Kernel::new(&spec, &dataset)?;
    let g = kernel.compute_gamma();
    println!(
        "dataset={desc} n={} kernel={}{}",
        dataset.n(),
        choice.kind,
        if choice.params.is_empty() {
            String::new()
        } else {
            format!("({})", choice.params)
        }
    );
    println!("gamma = {}", g.value);
    println!("sqrt max |K(x,x)| = {}", g.sqrt_max_abs_diag);
    if let Some(entry) = g.sqrt_max_abs_entry {
        println!("sqrt max |K(x,y)| = {entry}");
    }
    if g.diag_degenerate {
        println!(
            "note: the kernel diagonal vanishes, so gamma falls back to the largest \
             off-diagonal entry and is an order-of-magnitude figure, not a norm bound"
        );
    }
    Ok(())
}

fn main() {
    init_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(flags) => config::resolve(flags).and_then(|plan| runner::run(&plan)),
        Command::Summarize { input, out } => summarize::summarize(&input, &out),
        Command::Gamma { common } => gamma(&common),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
