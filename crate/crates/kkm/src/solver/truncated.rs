//! Truncated mini-batch kernel k-means. Each center is a sliding window of
//! recent batch contributions
//!
//!   C_j = sum_{l in Q} a_l cm(B_l^j) prod_{l' in Q, l' > l} (1 - a_l')
//!         [+ tail: the initial point, carrying the full decay product,
//!          while the window still reaches back to the start]
//!
//! where Q keeps the minimal suffix of batches holding at least tau member
//! points, so per-iteration cost depends on (k, b, tau) but never on n, and
//! no per-point state exists.
//!
//! Coefficient decay is lazy: a per-center accumulator ln_g collects the
//! log factors ln(1 - a); an entry stores ln(a_push) - ln_g(push time) and
//! its live coefficient is exp(stored + ln_g(now)). A step with a = 1 zeroes
//! every older coefficient (stored becomes -inf) and resets the accumulator.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;

use crate::centers::SparseCenter;
use crate::error::{Error, Result};
use crate::init::Init;
use crate::kernels::Kernel;
use crate::par;
use crate::solver::minibatch::IpState;
use crate::solver::{
    argmin_delta, sample_batch, should_stop, validate_epsilon, LearningRate, LrState, StepStats,
    StopRule,
};

/// One batch's contribution to a center: its member points (with
/// multiplicity, sorted ascending so gram-row walks stay prefetch-friendly)
/// and the log-scale coefficient of cm(members).
#[derive(Debug, Clone)]
struct WindowEntry {
    members: Vec<u32>,
    stored_ln: f64,
}

/// <phi(x), C> against an expanded center, with the row lookup hoisted out
/// of the member loop when the kernel is a precomputed matrix.
#[inline]
fn ip_against(kernel: &Kernel, x: usize, pts: &[(u32, f64)]) -> f64 {
    if let Some(row) = kernel.fast_row(x) {
        pts.iter().map(|&(m, w)| w * row[m as usize]).sum()
    } else {
        pts.iter()
            .map(|&(m, w)| w * kernel.eval(x, m as usize))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct TruncatedCenter {
    entries: VecDeque<WindowEntry>,
    ln_g: f64,
    tail: Option<u32>,
    tail_ln: f64,
    member_count: usize,
    self_ip: f64,
}

/// Once the log accumulator sinks below this, fold it into the stored
/// values so exp() keeps full precision.
const REBASE_THRESHOLD: f64 = -600.0;

impl TruncatedCenter {
    fn new(kernel: &Kernel, init_index: usize) -> Self {
        TruncatedCenter {
            entries: VecDeque::new(),
            ln_g: 0.0,
            tail: Some(init_index as u32),
            tail_ln: 0.0,
            member_count: 0,
            self_ip: kernel.diag(init_index),
        }
    }

    pub fn member_count(&self) -> usize {
        self.member_count
    }

    pub fn tail_present(&self) -> bool {
        self.tail.is_some()
    }

    /// Cached <C, C>.
    pub fn self_ip(&self) -> f64 {
        self.self_ip
    }

    /// Member counts of the window entries, oldest first.
    pub fn entry_counts(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.members.len()).collect()
    }

    /// The center as explicit (point index, weight) pairs: every member
    /// occurrence carries coefficient / count, the tail its own weight.
    /// Zero-coefficient parts are omitted.
    pub fn weighted_points(&self) -> Vec<(u32, f64)> {
        let mut out = Vec::with_capacity(self.member_count + 1);
        for e in &self.entries {
            let coeff = (e.stored_ln + self.ln_g).exp();
            if coeff == 0.0 {
                continue;
            }
            let w = coeff / e.members.len() as f64;
            out.extend(e.members.iter().map(|&m| (m, w)));
        }
        if let Some(t) = self.tail {
            let tw = self.tail_ln.exp();
            if tw > 0.0 {
                out.push((t, tw));
            }
        }
        out
    }

    /// Sum of all live coefficients; 1 while the tail is present, in (0, 1)
    /// after truncation has discarded mass.
    pub fn total_weight(&self) -> f64 {
        let mut w: f64 = self
            .entries
            .iter()
            .map(|e| (e.stored_ln + self.ln_g).exp())
            .sum();
        if self.tail.is_some() {
            w += self.tail_ln.exp();
        }
        w
    }

    /// <phi(x), C> by direct expansion over the window.
    pub fn point_ip(&self, kernel: &Kernel, x: usize) -> f64 {
        let mut acc = 0.0;
        for e in &self.entries {
            let coeff = (e.stored_ln + self.ln_g).exp();
            if coeff == 0.0 {
                continue;
            }
            let s: f64 = e.members.iter().map(|&m| kernel.eval(x, m as usize)).sum();
            acc += coeff * s / e.members.len() as f64;
        }
        if let Some(t) = self.tail {
            acc += self.tail_ln.exp() * kernel.eval(x, t as usize);
        }
        acc
    }

    /// |phi(x) - C|^2 using the cached self inner product.
    pub fn sq_dist(&self, kernel: &Kernel, x: usize) -> f64 {
        kernel.diag(x) - 2.0 * self.point_ip(kernel, x) + self.self_ip
    }

    /// Materializes as a SparseCenter (recomputes the self inner product
    /// from scratch).
    pub fn to_sparse(&self, kernel: &Kernel) -> Result<SparseCenter> {
        SparseCenter::from_weighted(
            kernel,
            self.weighted_points()
                .into_iter()
                .map(|(i, w)| (i as usize, w)),
        )
    }

    /// Applies the decay for one step of size `alpha` and appends the new
    /// batch entry. Members are stored sorted; the entry mean is
    /// order-free, and ascending indices keep later row walks sequential.
    fn decay_and_push(&mut self, alpha: f64, mut members: Vec<u32>) {
        debug_assert!(!members.is_empty());
        members.sort_unstable();
        if alpha == 1.0 {
            for e in self.entries.iter_mut() {
                e.stored_ln = f64::NEG_INFINITY;
            }
            self.ln_g = 0.0;
            if self.tail.is_some() {
                self.tail_ln = f64::NEG_INFINITY;
            }
        } else {
            let step = (-alpha).ln_1p();
            self.ln_g += step;
            if self.tail.is_some() {
                self.tail_ln += step;
            }
        }
        self.member_count += members.len();
        self.entries.push_back(WindowEntry {
            members,
            stored_ln: alpha.ln() - self.ln_g,
        });
    }

    /// Pops entries from the old end while at least tau members remain
    /// afterwards, and discards the tail once the member count has reached
    /// tau. Returns the dropped entries and whether the tail went.
    fn truncate(&mut self, tau: usize) -> (Vec<WindowEntry>, bool) {
        let mut dropped = Vec::new();
        while let Some(front) = self.entries.front() {
            if self.member_count - front.members.len() >= tau {
                self.member_count -= front.members.len();
                dropped.push(self.entries.pop_front().unwrap());
            } else {
                break;
            }
        }
        let mut tail_dropped = false;
        if self.member_count >= tau && self.tail.is_some() {
            self.tail = None;
            tail_dropped = true;
        }
        (dropped, tail_dropped)
    }

    fn rebase_if_needed(&mut self) {
        if self.ln_g < REBASE_THRESHOLD {
            for e in self.entries.iter_mut() {
                e.stored_ln += self.ln_g;
            }
            self.ln_g = 0.0;
        }
    }

    /// Full O(w^2) recomputation of <C, C> from the current window.
    fn refresh_self_ip(&mut self, kernel: &Kernel) {
        let pts = self.weighted_points();
        let partial = par::map_indexed(pts.len(), |i| {
            let (pi, wi) = pts[i];
            let upper = &pts[i + 1..];
            let acc = if let Some(row) = kernel.fast_row(pi as usize) {
                upper
                    .iter()
                    .map(|&(pj, wj)| wj * row[pj as usize])
                    .sum::<f64>()
            } else {
                upper
                    .iter()
                    .map(|&(pj, wj)| wj * kernel.eval(pi as usize, pj as usize))
                    .sum()
            };
            wi * wi * kernel.diag(pi as usize) + 2.0 * wi * acc
        });
        self.self_ip = partial.iter().sum();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauSpec {
    /// tau = ceil(b ln^2(28 gamma / epsilon)), from the kernel's scale.
    Auto,
    Fixed(usize),
}

/// Window size for the auto rule. Errors when epsilon or gamma make the
/// formula meaningless.
pub fn tau_auto(b: usize, gamma: f64, epsilon: f64) -> Result<usize> {
    if b == 0 {
        return Err(Error::param("b", "need batch size >= 1"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(
            "epsilon",
            format!("tau=auto needs epsilon > 0, got {epsilon}"),
        ));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param(
            "gamma",
            format!("tau=auto needs gamma > 0, got {gamma}"),
        ));
    }
    let v = b as f64 * (28.0 * gamma / epsilon).ln().powi(2);
    Ok((v.ceil() as usize).max(1))
}

#[derive(Debug, Clone)]
pub struct TruncatedConfig {
    pub k: usize,
    pub b: usize,
    pub tau: TauSpec,
    pub max_iters: usize,
    pub epsilon: f64,
    pub lr: LearningRate,
    pub stop: StopRule,
    pub init: Init,
    /// Maintain <C, C> by the update recurrence plus drop corrections
    /// instead of the default full recomputation per touched center.
    pub incremental_self_ip: bool,
}

#[derive(Debug)]
pub struct TruncatedState {
    pub centers: Vec<TruncatedCenter>,
    pub tau: usize,
    pub incremental_self_ip: bool,
    pub iter: usize,
}

impl TruncatedState {
    pub fn new(
        kernel: &Kernel,
        init_indices: &[usize],
        tau: usize,
        incremental_self_ip: bool,
    ) -> Result<Self> {
        if tau == 0 {
            return Err(Error::param("tau", "need tau >= 1"));
        }
        if init_indices.is_empty() {
            return Err(Error::EmptySubset);
        }
        Ok(TruncatedState {
            centers: init_indices
                .iter()
                .map(|&i| TruncatedCenter::new(kernel, i))
                .collect(),
            tau,
            incremental_self_ip,
            iter: 0,
        })
    }

    /// Mean minimum squared distance over the whole dataset.
    pub fn full_cost(&self, kernel: &Kernel) -> f64 {
        let pts: Vec<Vec<(u32, f64)>> = self
            .centers
            .iter()
            .map(TruncatedCenter::weighted_points)
            .collect();
        let ccs: Vec<f64> = self.centers.iter().map(TruncatedCenter::self_ip).collect();
        let dists = par::map_indexed(kernel.n(), |x| {
            let dx = kernel.diag(x);
            pts.iter()
                .zip(&ccs)
                .map(|(pj, &cc)| dx - 2.0 * ip_against(kernel, x, pj) + cc)
                .fold(f64::INFINITY, f64::min)
        });
        dists.iter().sum::<f64>() / kernel.n() as f64
    }

    /// Nearest-center labels for the whole dataset by direct expansion.
    pub fn assign_all(&self, kernel: &Kernel) -> Vec<u32> {
        let pts: Vec<Vec<(u32, f64)>> = self
            .centers
            .iter()
            .map(TruncatedCenter::weighted_points)
            .collect();
        let ccs: Vec<f64> = self.centers.iter().map(TruncatedCenter::self_ip).collect();
        par::map_indexed(kernel.n(), |x| {
            let dx = kernel.diag(x);
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for (j, pj) in pts.iter().enumerate() {
                let d = dx - 2.0 * ip_against(kernel, x, pj) + ccs[j];
                if d < best_d {
                    best_d = d;
                    best = j as u32;
                }
            }
            best
        })
    }

    fn batch_cost(&self, kernel: &Kernel, batch: &[usize], ccs: &[f64]) -> f64 {
        let k = self.centers.len();
        let pts: Vec<Vec<(u32, f64)>> = self
            .centers
            .iter()
            .map(TruncatedCenter::weighted_points)
            .collect();
        let mut ips = vec![0.0; batch.len() * k];
        par::for_each_chunk_mut(&mut ips, k, |p, row| {
            for (j, pj) in pts.iter().enumerate() {
                row[j] = ip_against(kernel, batch[p], pj);
            }
        });
        let mut cost = 0.0;
        for (p, &y) in batch.iter().enumerate() {
            let row = &ips[p * k..(p + 1) * k];
            cost += argmin_delta(kernel.diag(y), row, ccs).1;
        }
        cost / batch.len() as f64
    }
}

/// One step on an externally sampled batch: assign by direct expansion,
/// decay and extend each touched window, truncate to the tau rule, and
/// restore the cached self inner products.
pub fn truncated_step(
    kernel: &Kernel,
    state: &mut TruncatedState,
    batch: Vec<usize>,
    lr: &mut LrState,
) -> StepStats {
    truncated_step_inner(kernel, state, batch, lr, true)
}

/// `want_cost_after` gates the post-update assignment pass, which exists
/// only to feed the improvement-based stopping check; the update itself
/// never reads it.
fn truncated_step_inner(
    kernel: &Kernel,
    state: &mut TruncatedState,
    batch: Vec<usize>,
    lr: &mut LrState,
    want_cost_after: bool,
) -> StepStats {
    let k = state.centers.len();
    let b = batch.len();
    let tau = state.tau;

    let ccs: Vec<f64> = state.centers.iter().map(TruncatedCenter::self_ip).collect();
    let pts: Vec<Vec<(u32, f64)>> = state
        .centers
        .iter()
        .map(TruncatedCenter::weighted_points)
        .collect();
    let mut ips = vec![0.0; b * k];
    par::for_each_chunk_mut(&mut ips, k, |p, row| {
        for (j, pj) in pts.iter().enumerate() {
            row[j] = ip_against(kernel, batch[p], pj);
        }
    });
    drop(pts);
    let mut batch_labels = Vec::with_capacity(b);
    let mut cost_before = 0.0;
    for (p, &y) in batch.iter().enumerate() {
        let row = &ips[p * k..(p + 1) * k];
        let (l, d) = argmin_delta(kernel.diag(y), row, &ccs);
        batch_labels.push(l);
        cost_before += d;
    }
    cost_before /= b as f64;

    let mut counts = vec![0usize; k];
    for &l in &batch_labels {
        counts[l as usize] += 1;
    }
    let alphas: Vec<f64> = (0..k).map(|j| lr.alpha(j, counts[j], b)).collect();

    for j in 0..k {
        let a = alphas[j];
        if a == 0.0 {
            continue;
        }
        let mut members: Vec<u32> = batch
            .iter()
            .zip(&batch_labels)
            .filter(|&(_, &l)| l as usize == j)
            .map(|(&y, _)| y as u32)
            .collect();
        members.sort_unstable();
        let b_j = members.len() as f64;
        let m_j = batch_labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l as usize == j)
            .map(|(p, _)| ips[p * k + j])
            .sum::<f64>()
            / b_j;
        let mut q_j = 0.0;
        for &y in &members {
            if let Some(row) = kernel.fast_row(y as usize) {
                for &z in &members {
                    q_j += row[z as usize];
                }
            } else {
                for &z in &members {
                    q_j += kernel.eval(y as usize, z as usize);
                }
            }
        }
        q_j /= b_j * b_j;

        let center = &mut state.centers[j];
        center.decay_and_push(a, members);
        center.self_ip =
            (1.0 - a) * (1.0 - a) * center.self_ip + 2.0 * a * (1.0 - a) * m_j + a * a * q_j;

        if state.incremental_self_ip {
            // Corrections need the pre-pop expansion, so collect it first.
            let full = center.weighted_points();
            let had_tail = center.tail;
            let tail_w = center.tail_ln.exp();
            let (dropped, tail_dropped) = center.truncate(tau);
            if !dropped.is_empty() || tail_dropped {
                let mut d_pts: Vec<(u32, f64)> = Vec::new();
                for e in &dropped {
                    let coeff = (e.stored_ln + center.ln_g).exp();
                    if coeff > 0.0 {
                        let w = coeff / e.members.len() as f64;
                        d_pts.extend(e.members.iter().map(|&m| (m, w)));
                    }
                }
                if tail_dropped {
                    if let Some(t) = had_tail {
                        if tail_w > 0.0 {
                            d_pts.push((t, tail_w));
                        }
                    }
                }
                let mut cross = 0.0;
                for &(p, wp) in &full {
                    for &(q, wq) in &d_pts {
                        cross += wp * wq * kernel.eval(p as usize, q as usize);
                    }
                }
                let mut dd = 0.0;
                for &(p, wp) in &d_pts {
                    for &(q, wq) in &d_pts {
                        dd += wp * wq * kernel.eval(p as usize, q as usize);
                    }
                }
                center.self_ip = center.self_ip - 2.0 * cross + dd;
            }
        } else {
            center.truncate(tau);
            center.refresh_self_ip(kernel);
        }
        center.rebase_if_needed();
        debug_assert!(center.member_count <= tau + b);
    }

    state.iter += 1;
    let cost_after = if want_cost_after {
        let ccs_after: Vec<f64> = state.centers.iter().map(TruncatedCenter::self_ip).collect();
        state.batch_cost(kernel, &batch, &ccs_after)
    } else {
        f64::NAN
    };
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

#[derive(Debug)]
pub struct TruncatedFit {
    pub labels: Vec<u32>,
    pub init_indices: Vec<usize>,
    pub state: TruncatedState,
    pub tau: usize,
    pub iters_run: usize,
    /// f_B before each update, in iteration order.
    pub batch_costs: Vec<f64>,
    /// Per-iteration cost_before - cost_after. Empty when epsilon <= 0:
    /// stopping is disabled, so the extra assignment pass that would
    /// measure the improvement is skipped.
    pub improvements: Vec<f64>,
    pub iter_ms: Vec<f64>,
    pub stopped_early: bool,
}

pub fn truncated_fit(
    kernel: &Kernel,
    cfg: &TruncatedConfig,
    rng: &mut impl Rng,
) -> Result<TruncatedFit> {
    if cfg.b == 0 {
        return Err(Error::param("b", "need batch size >= 1"));
    }
    if cfg.max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    validate_epsilon(cfg.epsilon)?;
    let tau = match cfg.tau {
        TauSpec::Fixed(t) => {
            if t == 0 {
                return Err(Error::param("tau", "need tau >= 1"));
            }
            t
        }
        TauSpec::Auto => tau_auto(cfg.b, kernel.compute_gamma().value, cfg.epsilon)?,
    };
    let n = kernel.n();
    let init_indices = cfg.init.choose(kernel, cfg.k, rng)?;
    let mut state = TruncatedState::new(kernel, &init_indices, tau, cfg.incremental_self_ip)?;
    let mut lr = LrState::new(cfg.lr, cfg.k);

    let mut batch_costs = Vec::new();
    let mut improvements = Vec::new();
    let mut iter_ms = Vec::new();
    let mut stopped_early = false;
    // With stopping disabled the improvement is never consulted, so the
    // post-update assignment pass that computes it is skipped entirely.
    let track_improvement = cfg.epsilon > 0.0;
    for _ in 0..cfg.max_iters {
        let t0 = Instant::now();
        let batch = sample_batch(rng, n, cfg.b);
        let stats = truncated_step_inner(kernel, &mut state, batch, &mut lr, track_improvement);
        iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        batch_costs.push(stats.cost_before);
        if track_improvement {
            improvements.push(stats.improvement);
            if should_stop(cfg.stop, cfg.epsilon, stats.improvement) {
                stopped_early = true;
                break;
            }
        }
    }
    let labels = state.assign_all(kernel);
    Ok(TruncatedFit {
        labels,
        init_indices,
        iters_run: state.iter,
        tau,
        state,
        batch_costs,
        improvements,
        iter_ms,
        stopped_early,
    })
}

/// Distance between an explicitly materialized center and a truncated one:
/// sqrt(<a,a> - 2<a,c> + <c,c>).
pub fn center_gap(kernel: &Kernel, full: &SparseCenter, trunc: &TruncatedCenter) -> f64 {
    let pts = trunc.weighted_points();
    let mut cross = 0.0;
    for &(p, wp) in full.entries() {
        for &(q, wq) in &pts {
            cross += wp * wq * kernel.eval(p as usize, q as usize);
        }
    }
    (full.self_ip() - 2.0 * cross + trunc.self_ip())
        .max(0.0)
        .sqrt()
}

/// Same gap against center j of a tracked inner-product state: the cross
/// term is the weighted sum of the state's own ip entries, so no kernel
/// evaluations are needed.
pub fn center_gap_vs_state(state: &IpState, j: usize, trunc: &TruncatedCenter) -> f64 {
    let cross: f64 = trunc
        .weighted_points()
        .iter()
        .map(|&(p, w)| w * state.ip_row(p as usize)[j])
        .sum();
    (state.cc()[j] - 2.0 * cross + trunc.self_ip())
        .max(0.0)
        .sqrt()
}
