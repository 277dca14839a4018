//! Mini-batch kernel k-means that maintains, for every point x and center j,
//! the inner product ip[x][j] = <phi(x), C_j> plus cc[j] = <C_j, C_j>. The
//! center update C' = (1 - a) C + a cm(B_j) then becomes a recurrence on ip
//! and cc, costing O(n (b + k)) per iteration and O(n k) memory, with no
//! center ever materialized.

use std::time::Instant;

use rand::Rng;

use crate::centers::SparseCenter;
use crate::error::{Error, Result};
use crate::init::Init;
use crate::kernels::Kernel;
use crate::par;
use crate::solver::{
    argmin_delta, sample_batch, should_stop, validate_epsilon, LearningRate, LrState, StepStats,
    StopRule,
};

/// The tracked inner products. Row x of `ip` holds <phi(x), C_j> for
/// j = 0..k.
#[derive(Debug, Clone)]
pub struct IpState {
    ip: Vec<f64>,
    cc: Vec<f64>,
    n: usize,
    k: usize,
    pub iter: usize,
}

impl IpState {
    /// Initializes from arbitrary weighted centers by direct kernel sums.
    pub fn from_centers(kernel: &Kernel, centers: &[SparseCenter]) -> Self {
        let n = kernel.n();
        let k = centers.len();
        assert!(k > 0, "need at least one center");
        let mut ip = vec![0.0; n * k];
        par::for_each_chunk_mut(&mut ip, k, |x, row| {
            for (j, c) in centers.iter().enumerate() {
                row[j] = c.point_ip(kernel, x);
            }
        });
        let cc = centers.iter().map(SparseCenter::self_ip).collect();
        IpState {
            ip,
            cc,
            n,
            k,
            iter: 0,
        }
    }

    /// Initializes from singleton centers at the given point indices.
    pub fn from_indices(kernel: &Kernel, indices: &[usize]) -> Self {
        let n = kernel.n();
        let k = indices.len();
        assert!(k > 0, "need at least one center");
        let mut ip = vec![0.0; n * k];
        par::for_each_chunk_mut(&mut ip, k, |x, row| {
            for (j, &c) in indices.iter().enumerate() {
                row[j] = kernel.eval(x, c);
            }
        });
        let cc = indices.iter().map(|&c| kernel.diag(c)).collect();
        IpState {
            ip,
            cc,
            n,
            k,
            iter: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn ip_row(&self, x: usize) -> &[f64] {
        &self.ip[x * self.k..(x + 1) * self.k]
    }

    pub fn cc(&self) -> &[f64] {
        &self.cc
    }

    /// Nearest center of point x and its squared distance.
    #[inline]
    pub fn assign_point(&self, kernel: &Kernel, x: usize) -> (u32, f64) {
        argmin_delta(kernel.diag(x), self.ip_row(x), &self.cc)
    }

    /// Nearest-center labels for the whole dataset.
    pub fn assign_all(&self, kernel: &Kernel) -> Vec<u32> {
        par::map_indexed(self.n, |x| self.assign_point(kernel, x).0)
    }

    /// Mean squared distance of the batch to its nearest centers.
    pub fn batch_cost(&self, kernel: &Kernel, batch: &[usize]) -> f64 {
        let sum: f64 = batch.iter().map(|&y| self.assign_point(kernel, y).1).sum();
        sum / batch.len() as f64
    }
}

/// Applies the center updates for one iteration given the batch partition:
/// for every center j with members B_j and step size a_j,
///
///   ip'[x][j] = (1 - a_j) ip[x][j] + a_j (1/b_j) sum_{y in B_j} K(x, y)
///   cc'[j]    = (1 - a_j)^2 cc[j] + 2 a_j (1 - a_j) m_j + a_j^2 q_j
///
/// where m_j = (1/b_j) sum_{y in B_j} ip[y][j] uses the pre-update ip values
/// and q_j is the mean of the b_j x b_j kernel block of B_j.
pub fn apply_partition(
    kernel: &Kernel,
    state: &mut IpState,
    batch: &[usize],
    batch_labels: &[u32],
    alphas: &[f64],
) {
    let k = state.k;
    debug_assert_eq!(batch.len(), batch_labels.len());
    debug_assert_eq!(alphas.len(), k);

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&y, &l) in batch.iter().zip(batch_labels) {
        members[l as usize].push(y);
    }

    // m_j from the old ip values, in batch order per cluster.
    let mut m = vec![0.0; k];
    for j in 0..k {
        if !members[j].is_empty() {
            let s: f64 = members[j].iter().map(|&y| state.ip_row(y)[j]).sum();
            m[j] = s / members[j].len() as f64;
        }
    }
    // q_j: mean pairwise kernel value within each cluster's batch points.
    let mut q = vec![0.0; k];
    for j in 0..k {
        let mem = &members[j];
        if mem.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for &y in mem {
            for &z in mem {
                s += kernel.eval(y, z);
            }
        }
        q[j] = s / (mem.len() as f64 * mem.len() as f64);
    }

    let ip = &mut state.ip;
    par::for_each_chunk_mut(ip, k, |x, row| {
        for j in 0..k {
            let a = alphas[j];
            if a == 0.0 {
                continue;
            }
            let mem = &members[j];
            let s: f64 = mem.iter().map(|&y| kernel.eval(x, y)).sum();
            row[j] = (1.0 - a) * row[j] + a * s / mem.len() as f64;
        }
    });
    for j in 0..k {
        let a = alphas[j];
        if a == 0.0 {
            continue;
        }
        state.cc[j] =
            (1.0 - a) * (1.0 - a) * state.cc[j] + 2.0 * a * (1.0 - a) * m[j] + a * a * q[j];
    }
    state.iter += 1;
}

/// One full step on an externally sampled batch: assign, compute step
/// sizes, update, and report the batch improvement (the post-update batch
/// cost reuses the freshly updated ip rows, no extra kernel work).
pub fn minibatch_step(
    kernel: &Kernel,
    state: &mut IpState,
    batch: Vec<usize>,
    lr: &mut LrState,
) -> StepStats {
    let k = state.k;
    let b = batch.len();
    let mut batch_labels = Vec::with_capacity(b);
    let mut cost_before = 0.0;
    for &y in &batch {
        let (l, d) = state.assign_point(kernel, y);
        batch_labels.push(l);
        cost_before += d;
    }
    cost_before /= b as f64;

    let mut counts = vec![0usize; k];
    for &l in &batch_labels {
        counts[l as usize] += 1;
    }
    let alphas: Vec<f64> = (0..k).map(|j| lr.alpha(j, counts[j], b)).collect();

    apply_partition(kernel, state, &batch, &batch_labels, &alphas);

    let cost_after = state.batch_cost(kernel, &batch);
    StepStats {
        batch,
        batch_labels,
        counts,
        alphas,
        cost_before,
        cost_after,
        improvement: cost_before - cost_after,
    }
}

#[derive(Debug, Clone)]
pub struct MiniBatchConfig {
    pub k: usize,
    pub b: usize,
    pub max_iters: usize,
    /// Improvement threshold; 0 disables early stopping.
    pub epsilon: f64,
    pub lr: LearningRate,
    pub stop: StopRule,
    pub init: Init,
}

#[derive(Debug)]
pub struct MiniBatchFit {
    pub labels: Vec<u32>,
    pub init_indices: Vec<usize>,
    pub state: IpState,
    pub iters_run: usize,
    /// f_B(C_i) per iteration.
    pub batch_costs: Vec<f64>,
    pub improvements: Vec<f64>,
    pub iter_ms: Vec<f64>,
    pub stopped_early: bool,
}

pub fn minibatch_fit(
    kernel: &Kernel,
    cfg: &MiniBatchConfig,
    rng: &mut impl Rng,
) -> Result<MiniBatchFit> {
    if cfg.b == 0 {
        return Err(Error::param("b", "need batch size >= 1"));
    }
    if cfg.max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    validate_epsilon(cfg.epsilon)?;
    let n = kernel.n();
    let init_indices = cfg.init.choose(kernel, cfg.k, rng)?;
    let mut state = IpState::from_indices(kernel, &init_indices);
    let mut lr = LrState::new(cfg.lr, cfg.k);

    let mut batch_costs = Vec::new();
    let mut improvements = Vec::new();
    let mut iter_ms = Vec::new();
    let mut stopped_early = false;
    for _ in 0..cfg.max_iters {
        let t0 = Instant::now();
        let batch = sample_batch(rng, n, cfg.b);
        let stats = minibatch_step(kernel, &mut state, batch, &mut lr);
        iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        batch_costs.push(stats.cost_before);
        improvements.push(stats.improvement);
        if should_stop(cfg.stop, cfg.epsilon, stats.improvement) {
            stopped_early = true;
            break;
        }
    }
    let labels = state.assign_all(kernel);
    Ok(MiniBatchFit {
        labels,
        init_indices,
        iters_run: state.iter,
        state,
        batch_costs,
        improvements,
        iter_ms,
        stopped_early,
    })
}
