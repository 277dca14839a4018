//! Center initialization: uniform distinct sampling and D^2 (k-means++)
//! seeding, both driven by a caller-supplied RNG so runs replay exactly.

use rand::prelude::*;

use crate::centers::SparseCenter;
use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// How a solver picks its k starting points.
#[derive(Debug, Clone)]
pub enum Init {
    KmeansPp,
    Uniform,
    /// Explicit point indices, length k.
    Indices(Vec<usize>),
}

impl Init {
    pub fn choose(&self, kernel: &Kernel, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let n = kernel.n();
        if k == 0 || k > n {
            return Err(Error::param(
                "k",
                format!("need 1 <= k <= n = {n}, got {k}"),
            ));
        }
        match self {
            Init::KmeansPp => Ok(kmeans_pp_with_stats(kernel, k, rng)?.0),
            Init::Uniform => Ok(uniform_init(n, k, rng)),
            Init::Indices(idx) => {
                if idx.len() != k {
                    return Err(Error::param(
                        "init",
                        format!("{} indices given for k = {k}", idx.len()),
                    ));
                }
                for &i in idx {
                    if i >= n {
                        return Err(Error::IndexOutOfBounds { index: i, size: n });
                    }
                }
                Ok(idx.clone())
            }
        }
    }
}

/// k distinct indices drawn uniformly; with k = n this is a random
/// permutation.
pub fn uniform_init(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

/// Diagnostics from a D^2 seeding run.
#[derive(Debug, Clone, Copy, Default)]
pub struct PpStats {
    /// Total negative squared-distance mass clipped to zero. Exactly 0 when
    /// the kernel is positive semidefinite.
    pub clamped_mass: f64,
}

/// D^2 seeding: the first center is uniform, each next one is drawn with
/// probability proportional to the current squared distance to the nearest
/// chosen center (clamped at zero for indefinite kernels). If every
/// remaining point has zero mass, the next center is uniform among the
/// unchosen points.
pub fn kmeans_pp(kernel: &Kernel, k: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    Ok(kmeans_pp_with_stats(kernel, k, rng)?.0)
}

pub fn kmeans_pp_with_stats(
    kernel: &Kernel,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Vec<usize>, PpStats)> {
    let n = kernel.n();
    if k == 0 || k > n {
        return Err(Error::param(
            "k",
            format!("need 1 <= k <= n = {n}, got {k}"),
        ));
    }
    let mut stats = PpStats::default();
    let mut chosen = Vec::with_capacity(k);
    let mut is_chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    is_chosen[first] = true;

    let mut min_d2 = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let latest = SparseCenter::singleton(kernel, *chosen.last().unwrap());
        let mut total = 0.0;
        for x in 0..n {
            let d = latest.sq_dist(kernel, x);
            if d < min_d2[x] {
                min_d2[x] = d;
            }
            if !is_chosen[x] {
                let m = min_d2[x];
                if m < 0.0 {
                    stats.clamped_mass -= m;
                }
                total += m.max(0.0);
            }
        }

        let next = if total > 0.0 {
            let u = rng.random_range(0.0..total);
            let mut cum = 0.0;
            let mut pick = None;
            for x in 0..n {
                if is_chosen[x] {
                    continue;
                }
                cum += min_d2[x].max(0.0);
                if u < cum {
                    pick = Some(x);
                    break;
                }
            }
            // Rounding in the cumulative walk can leave u unmatched; fall
            // back to the last unchosen point.
            pick.unwrap_or_else(|| (0..n).rev().find(|&x| !is_chosen[x]).unwrap())
        } else {
            let remaining = n - chosen.len();
            let r = rng.random_range(0..remaining);
            (0..n).filter(|&x| !is_chosen[x]).nth(r).unwrap()
        };
        chosen.push(next);
        is_chosen[next] = true;
    }
    Ok((chosen, stats))
}
