//! Full-batch kernel k-means (Lloyd's algorithm in feature space). Each
//! iteration assigns every point to its nearest implicit cluster mean via
//!
//!   d(x, cm(A_j))^2 = K(x,x) - (2/|A_j|) T_j(x) + S_j / |A_j|^2
//!
//! with T_j(x) = sum_{y in A_j} K(x, y) and S_j the pairwise sum inside
//! A_j, then rebuilds T and S from the new labels: O(n^2) kernel work per
//! iteration.

use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::init::Init;
use crate::kernels::Kernel;
use crate::matrix::SquareMatrix;
use crate::par;

#[derive(Debug, Clone)]
pub struct FullBatchConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Cost-improvement stopping threshold; 0 stops only on a fixed point
    /// or the iteration cap.
    pub tol: f64,
    pub init: Init,
    /// Number of leading point rows whose kernel values are precomputed
    /// once and reused across iterations (0 = evaluate on demand; >= n =
    /// fully materialized behavior). Affects speed only, never results.
    pub gram_row_budget: usize,
    /// Keep iterating through label fixed points until `max_iters`. A
    /// fixed point is absorbing, so labels and costs are unchanged; every
    /// iteration still performs its full assignment and rebuild work. For
    /// benchmarking a fixed iteration budget.
    pub run_to_cap: bool,
}

impl FullBatchConfig {
    pub fn new(k: usize, max_iters: usize) -> Self {
        FullBatchConfig {
            k,
            max_iters,
            tol: 0.0,
            init: Init::KmeansPp,
            gram_row_budget: 0,
            run_to_cap: false,
        }
    }
}

#[derive(Debug)]
pub struct FullBatchFit {
    pub labels: Vec<u32>,
    /// Labels after every assignment sweep, in order.
    pub labels_history: Vec<Vec<u32>>,
    /// f_X after every assignment sweep (mean nearest-center squared
    /// distance).
    pub costs: Vec<f64>,
    pub iters_run: usize,
    pub iter_ms: Vec<f64>,
    pub init_indices: Vec<usize>,
    /// True when a sweep reproduced the previous labels.
    pub converged: bool,
}

struct Caches {
    /// Row-major n x k: t[x][j] = sum_{y in A_j} K(x, y); for iteration 1
    /// the "clusters" are the k init singletons.
    t: Vec<f64>,
    /// Pairwise sums per cluster.
    s: Vec<f64>,
    /// Divisors: |A_j|, or 1 for the init singletons. A cluster that goes
    /// empty keeps its previous t column, s, and divisor, freezing the old
    /// center in place.
    c: Vec<f64>,
}

/// `gram`: optional full Gram matrix; values must equal `kernel.eval`
/// outputs (e.g. from `Kernel::materialize`), making results identical to
/// the on-demand path.
pub fn full_batch_fit(
    kernel: &Kernel,
    cfg: &FullBatchConfig,
    rng: &mut impl Rng,
    gram: Option<&SquareMatrix>,
) -> Result<FullBatchFit> {
    if cfg.max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    if cfg.tol < 0.0 || cfg.tol.is_nan() {
        return Err(Error::param(
            "tol",
            format!("need tol >= 0, got {}", cfg.tol),
        ));
    }
    if let Some(g) = gram {
        if g.n() != kernel.n() {
            return Err(Error::KernelSizeMismatch {
                kernel_n: g.n(),
                data_n: kernel.n(),
            });
        }
    }
    let n = kernel.n();
    let k = cfg.k;
    let init_indices = cfg.init.choose(kernel, k, rng)?;

    // Rows precomputed up to the budget (unless a full Gram is already
    // supplied); reused by every T rebuild.
    let cached_rows = if gram.is_some() {
        0
    } else {
        cfg.gram_row_budget.min(n)
    };
    let row_cache: Vec<f64> = {
        let mut buf = vec![0.0; cached_rows * n];
        let cols: Vec<usize> = (0..n).collect();
        par::for_each_chunk_mut(&mut buf, n.max(1), |x, row| {
            if !row.is_empty() {
                kernel.row_into(x, &cols, row);
            }
        });
        buf
    };
    let row_of = |x: usize| -> Option<&[f64]> {
        if let Some(g) = gram {
            Some(g.row(x))
        } else if x < cached_rows {
            Some(&row_cache[x * n..(x + 1) * n])
        } else {
            None
        }
    };

    let mut caches = Caches {
        t: {
            let mut t = vec![0.0; n * k];
            par::for_each_chunk_mut(&mut t, k, |x, row| {
                for (j, &cj) in init_indices.iter().enumerate() {
                    row[j] = kernel.eval(x, cj);
                }
            });
            t
        },
        s: init_indices.iter().map(|&cj| kernel.diag(cj)).collect(),
        c: vec![1.0; k],
    };

    let mut labels: Vec<u32> = Vec::new();
    let mut labels_history = Vec::new();
    let mut costs: Vec<f64> = Vec::new();
    let mut iter_ms = Vec::new();
    let mut converged = false;

    for iter in 0..cfg.max_iters {
        let t0 = Instant::now();

        let inv_c: Vec<f64> = caches.c.iter().map(|&cj| 1.0 / cj).collect();
        let sc: Vec<f64> = (0..k).map(|j| caches.s[j] * inv_c[j] * inv_c[j]).collect();
        let assigned: Vec<(u32, f64)> = par::map_indexed(n, |x| {
            let row = &caches.t[x * k..(x + 1) * k];
            let dx = kernel.diag(x);
            let mut best = 0u32;
            let mut best_d = dx - 2.0 * row[0] * inv_c[0] + sc[0];
            for j in 1..k {
                let d = dx - 2.0 * row[j] * inv_c[j] + sc[j];
                if d < best_d {
                    best_d = d;
                    best = j as u32;
                }
            }
            (best, best_d)
        });
        let new_labels: Vec<u32> = assigned.iter().map(|a| a.0).collect();
        let cost = assigned.iter().map(|a| a.1).sum::<f64>() / n as f64;
        costs.push(cost);
        labels_history.push(new_labels.clone());

        let fixed_point = iter > 0 && new_labels == labels;
        let small_improvement = cfg.tol > 0.0 && iter > 0 && costs[iter - 1] - cost < cfg.tol;
        labels = new_labels;
        if fixed_point {
            converged = true;
        }
        let stop_early = (fixed_point || small_improvement) && !cfg.run_to_cap;
        if stop_early || iter + 1 == cfg.max_iters {
            iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            break;
        }

        let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
        for (x, &l) in labels.iter().enumerate() {
            members[l as usize].push(x as u32);
        }
        par::for_each_chunk_mut(&mut caches.t, k, |x, row| {
            if let Some(krow) = row_of(x) {
                for (j, mem) in members.iter().enumerate() {
                    if !mem.is_empty() {
                        row[j] = mem.iter().map(|&y| krow[y as usize]).sum();
                    }
                }
            } else {
                for (j, mem) in members.iter().enumerate() {
                    if !mem.is_empty() {
                        row[j] = mem.iter().map(|&y| kernel.eval(x, y as usize)).sum();
                    }
                }
            }
        });
        for (j, mem) in members.iter().enumerate() {
            if !mem.is_empty() {
                caches.s[j] = mem.iter().map(|&x| caches.t[x as usize * k + j]).sum();
                caches.c[j] = mem.len() as f64;
            }
        }
        iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }

    Ok(FullBatchFit {
        labels,
        labels_history,
        iters_run: costs.len(),
        costs,
        iter_ms,
        init_indices,
        converged,
    })
}
