//! Plain-coordinate references: Lloyd's algorithm and a mini-batch k-means
//! with explicit centers in R^d. The kernel solvers with a linear kernel
//! must reproduce these (same assignments), and on non-linearly-separable
//! data these are the baselines kernel methods are compared against.

use std::time::Instant;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par;
use crate::solver::{sample_batch, should_stop, validate_epsilon, LearningRate, LrState, StopRule};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center in coordinates, ties to the lowest index.
fn nearest(x: &[f64], centers: &[f64], k: usize, d: usize) -> (u32, f64) {
    let mut best = 0u32;
    let mut best_d = sq_dist(x, &centers[0..d]);
    for j in 1..k {
        let dist = sq_dist(x, &centers[j * d..(j + 1) * d]);
        if dist < best_d {
            best_d = dist;
            best = j as u32;
        }
    }
    (best, best_d)
}

#[derive(Debug)]
pub struct LloydFit {
    pub labels: Vec<u32>,
    pub labels_history: Vec<Vec<u32>>,
    pub costs: Vec<f64>,
    pub iters_run: usize,
    pub converged: bool,
}

/// Classic Lloyd iteration from explicit starting points. An emptied
/// cluster keeps its previous center.
pub fn lloyd_fit(
    data: &Dataset,
    init_indices: &[usize],
    max_iters: usize,
    tol: f64,
) -> Result<LloydFit> {
    let (n, d) = (data.n(), data.d());
    let k = init_indices.len();
    if k == 0 || k > n {
        return Err(Error::param(
            "k",
            format!("need 1 <= k <= n = {n}, got {k}"),
        ));
    }
    if max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    if d == 0 {
        return Err(Error::NoFeatureColumns);
    }
    let mut centers = vec![0.0; k * d];
    for (j, &i) in init_indices.iter().enumerate() {
        if i >= n {
            return Err(Error::IndexOutOfBounds { index: i, size: n });
        }
        centers[j * d..(j + 1) * d].copy_from_slice(data.row(i));
    }

    let mut labels: Vec<u32> = Vec::new();
    let mut labels_history = Vec::new();
    let mut costs: Vec<f64> = Vec::new();
    let mut converged = false;
    for iter in 0..max_iters {
        let assigned: Vec<(u32, f64)> =
            par::map_indexed(n, |x| nearest(data.row(x), &centers, k, d));
        let new_labels: Vec<u32> = assigned.iter().map(|a| a.0).collect();
        let cost = assigned.iter().map(|a| a.1).sum::<f64>() / n as f64;
        costs.push(cost);
        labels_history.push(new_labels.clone());

        let fixed_point = iter > 0 && new_labels == labels;
        let small_improvement = tol > 0.0 && iter > 0 && costs[iter - 1] - cost < tol;
        labels = new_labels;
        if fixed_point {
            converged = true;
        }
        if fixed_point || small_improvement || iter + 1 == max_iters {
            break;
        }

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (x, &l) in labels.iter().enumerate() {
            let j = l as usize;
            counts[j] += 1;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(data.row(x)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for c in 0..d {
                    centers[j * d + c] = sums[j * d + c] / counts[j] as f64;
                }
            }
        }
    }
    Ok(LloydFit {
        labels,
        labels_history,
        iters_run: costs.len(),
        costs,
        converged,
    })
}

#[derive(Debug)]
pub struct EuclideanMiniBatchFit {
    pub labels: Vec<u32>,
    pub iters_run: usize,
    pub batch_costs: Vec<f64>,
    pub improvements: Vec<f64>,
    pub iter_ms: Vec<f64>,
    pub stopped_early: bool,
    /// Mean squared distance to the nearest final center over the dataset.
    pub final_cost: f64,
}

/// Mini-batch k-means in coordinates, mirroring the kernel solver's
/// schedule: per center, c' = (1 - a) c + a * mean(batch members), with the
/// same learning rates, batch sampling, and stopping rule.
#[allow(clippy::too_many_arguments)]
pub fn euclidean_minibatch_fit(
    data: &Dataset,
    init_indices: &[usize],
    b: usize,
    max_iters: usize,
    epsilon: f64,
    lr_kind: LearningRate,
    stop: StopRule,
    rng: &mut impl Rng,
) -> Result<EuclideanMiniBatchFit> {
    let (n, d) = (data.n(), data.d());
    let k = init_indices.len();
    if k == 0 || k > n {
        return Err(Error::param(
            "k",
            format!("need 1 <= k <= n = {n}, got {k}"),
        ));
    }
    if b == 0 {
        return Err(Error::param("b", "need batch size >= 1"));
    }
    if max_iters == 0 {
        return Err(Error::param("max_iters", "need at least one iteration"));
    }
    if d == 0 {
        return Err(Error::NoFeatureColumns);
    }
    validate_epsilon(epsilon)?;
    let mut centers = vec![0.0; k * d];
    for (j, &i) in init_indices.iter().enumerate() {
        if i >= n {
            return Err(Error::IndexOutOfBounds { index: i, size: n });
        }
        centers[j * d..(j + 1) * d].copy_from_slice(data.row(i));
    }
    let mut lr = LrState::new(lr_kind, k);

    let mut batch_costs = Vec::new();
    let mut improvements = Vec::new();
    let mut iter_ms = Vec::new();
    let mut stopped_early = false;
    let mut iters_run = 0;
    for _ in 0..max_iters {
        let t0 = Instant::now();
        let batch = sample_batch(rng, n, b);
        let mut cost_before = 0.0;
        let mut batch_labels = Vec::with_capacity(b);
        for &y in &batch {
            let (l, dist) = nearest(data.row(y), &centers, k, d);
            batch_labels.push(l);
            cost_before += dist;
        }
        cost_before /= b as f64;

        let mut counts = vec![0usize; k];
        let mut sums = vec![0.0; k * d];
        for (&y, &l) in batch.iter().zip(&batch_labels) {
            let j = l as usize;
            counts[j] += 1;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(data.row(y)) {
                *s += v;
            }
        }
        for j in 0..k {
            let a = lr.alpha(j, counts[j], b);
            if a == 0.0 {
                continue;
            }
            let bj = counts[j] as f64;
            for c in 0..d {
                centers[j * d + c] = (1.0 - a) * centers[j * d + c] + a * sums[j * d + c] / bj;
            }
        }

        let cost_after = batch
            .iter()
            .map(|&y| nearest(data.row(y), &centers, k, d).1)
            .sum::<f64>()
            / b as f64;
        let improvement = cost_before - cost_after;
        iters_run += 1;
        batch_costs.push(cost_before);
        improvements.push(improvement);
        iter_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        if should_stop(stop, epsilon, improvement) {
            stopped_early = true;
            break;
        }
    }
    let assigned = par::map_indexed(n, |x| nearest(data.row(x), &centers, k, d));
    let final_cost = assigned.iter().map(|&(_, dist)| dist).sum::<f64>() / n as f64;
    let labels = assigned.into_iter().map(|(l, _)| l).collect();
    Ok(EuclideanMiniBatchFit {
        labels,
        iters_run,
        batch_costs,
        improvements,
        iter_ms,
        stopped_early,
        final_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_blobs, Dataset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn lloyd_solves_the_line_instance() {
        let ds = Dataset::new("line", 4, 1, vec![0.0, 1.0, 10.0, 11.0], None).unwrap();
        let fit = lloyd_fit(&ds, &[0, 2], 50, 0.0).unwrap();
        assert_eq!(fit.labels, vec![0, 0, 1, 1]);
        assert!((fit.costs.last().unwrap() - 0.25).abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn lloyd_cost_never_increases() {
        let ds = gen_blobs(200, 4, 3, 2.0, 44).unwrap();
        let fit = lloyd_fit(&ds, &[3, 50, 120, 199], 60, 0.0).unwrap();
        for w in fit.costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn minibatch_separates_well_spread_blobs() {
        let ds = gen_blobs(300, 3, 2, 0.3, 7).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let init = crate::init::uniform_init(300, 3, &mut rng);
        let fit = euclidean_minibatch_fit(
            &ds,
            &init,
            32,
            100,
            0.0,
            LearningRate::SqrtRatio,
            StopRule::Improvement,
            &mut rng,
        )
        .unwrap();
        assert_eq!(fit.iters_run, 100);
        let ari = crate::metrics::ari(&fit.labels, ds.labels().unwrap()).unwrap();
        assert!(ari > 0.9, "ari {ari}");
    }
}
