//! Brute-force reference implementations. Everything here trades speed for
//! obviousness: dense per-point weight vectors instead of recurrences, full
//! eigendecomposition instead of series expansion, exhaustive search instead
//! of iteration. Tests hold the fast paths against these.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::matrix::SquareMatrix;

/// Eigendecomposition of a symmetric matrix: `values` ascending, column j of
/// `vectors` is the unit eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
}

impl Eigen {
    fn map_reconstruct(&self, f: impl Fn(f64) -> f64) -> SquareMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for (m, &fm) in fv.iter().enumerate() {
                    acc += self.vectors.get(i, m) * fm * self.vectors.get(j, m);
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }

    /// V diag(lambda) V^T; recovers the input up to rounding.
    pub fn reconstruct(&self) -> SquareMatrix {
        self.map_reconstruct(|l| l)
    }

    /// V diag(exp(lambda)) V^T, the exact matrix exponential.
    pub fn exp_reconstruct(&self) -> SquareMatrix {
        self.map_reconstruct(f64::exp)
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver for symmetric matrices. Panics on asymmetric
/// input; meant for test-sized problems (cost grows as n^3 per sweep).
pub fn jacobi_eigen(m: &SquareMatrix) -> Eigen {
    m.check_symmetric(1e-9)
        .expect("jacobi_eigen needs a symmetric matrix");
    let n = m.n();
    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-13 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for i in 0..n {
                    let api = a.get(p, i);
                    let aqi = a.get(q, i);
                    a.set(p, i, c * api - s * aqi);
                    a.set(q, i, s * api + c * aqi);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, dst, v.get(i, src));
        }
    }
    Eigen { values, vectors }
}

/// Smallest eigenvalue, for PSD checks.
pub fn min_eigenvalue(m: &SquareMatrix) -> f64 {
    jacobi_eigen(m).values[0]
}

/// Mini-batch center state held as explicit per-point weight vectors,
/// row j being center j's convex combination over all n points. The
/// recurrence-based solvers must agree with inner products taken against
/// these weights.
#[derive(Debug, Clone)]
pub struct DenseState {
    weights: Vec<Vec<f64>>,
}

impl DenseState {
    pub fn from_indices(n: usize, init_indices: &[usize]) -> Self {
        let weights = init_indices
            .iter()
            .map(|&i| {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                row
            })
            .collect();
        DenseState { weights }
    }

    pub fn weights(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    /// w_j <- (1 - a_j) w_j + a_j ind(B_j)/|B_j| for every touched center.
    pub fn apply(&mut self, batch: &[usize], batch_labels: &[u32], alphas: &[f64]) {
        for (j, row) in self.weights.iter_mut().enumerate() {
            let a = alphas[j];
            if a == 0.0 {
                continue;
            }
            let members: Vec<usize> = batch
                .iter()
                .zip(batch_labels)
                .filter(|&(_, &l)| l as usize == j)
                .map(|(&y, _)| y)
                .collect();
            let share = a / members.len() as f64;
            for w in row.iter_mut() {
                *w *= 1.0 - a;
            }
            for &y in &members {
                row[y] += share;
            }
        }
    }

    /// <phi(x), C_j> summed over every weight.
    pub fn ip(&self, kernel: &Kernel, x: usize, j: usize) -> f64 {
        self.weights[j]
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(y, &w)| w * kernel.eval(x, y))
            .sum()
    }

    /// <C_j, C_j> summed over every weight pair.
    pub fn cc(&self, kernel: &Kernel, j: usize) -> f64 {
        let nz: Vec<(usize, f64)> = self.weights[j]
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w != 0.0)
            .map(|(y, &w)| (y, w))
            .collect();
        let mut acc = 0.0;
        for &(y, wy) in &nz {
            for &(z, wz) in &nz {
                acc += wy * wz * kernel.eval(y, z);
            }
        }
        acc
    }

    /// Every center stays a convex combination: weights nonnegative with
    /// total at most 1.
    pub fn check_convexity(&self, tol: f64) -> bool {
        self.weights
            .iter()
            .all(|row| row.iter().all(|&w| w >= -tol) && row.iter().sum::<f64>() <= 1.0 + tol)
    }
}

const EXHAUSTIVE_MAX_N: usize = 12;
const EXHAUSTIVE_MAX_K: usize = 3;

#[derive(Debug, Clone)]
pub struct ExhaustiveOpt {
    pub cost: f64,
    pub labels: Vec<u32>,
}

/// Global optimum of the kernel k-means objective by enumerating every
/// assignment (point 0 pinned to cluster 0 to quotient out relabeling).
/// Only feasible for tiny instances, and errors beyond n = 12 or k = 3.
pub fn exhaustive_opt(kernel: &Kernel, k: usize) -> Result<ExhaustiveOpt> {
    let n = kernel.n();
    if k == 0 {
        return Err(Error::param("k", "need k >= 1"));
    }
    if n > EXHAUSTIVE_MAX_N || k > EXHAUSTIVE_MAX_K {
        return Err(Error::ExhaustiveTooLarge {
            n,
            max_n: EXHAUSTIVE_MAX_N,
            k,
            max_k: EXHAUSTIVE_MAX_K,
        });
    }
    let gram = kernel.materialize();
    let diag_sum: f64 = (0..n).map(|i| gram.get(i, i)).sum();

    let mut labels = vec![0u32; n];
    let mut best = ExhaustiveOpt {
        cost: f64::INFINITY,
        labels: labels.clone(),
    };
    let total = (k as u64).pow((n - 1) as u32);
    let mut s = vec![0.0f64; k];
    let mut cnt = vec![0usize; k];
    for code in 0..total {
        let mut c = code;
        for l in labels.iter_mut().skip(1) {
            *l = (c % k as u64) as u32;
            c /= k as u64;
        }
        s.iter_mut().for_each(|v| *v = 0.0);
        cnt.iter_mut().for_each(|v| *v = 0);
        for x in 0..n {
            let lx = labels[x] as usize;
            cnt[lx] += 1;
            let row = gram.row(x);
            for y in 0..n {
                if labels[y] as usize == lx {
                    s[lx] += row[y];
                }
            }
        }
        let mut cost = diag_sum;
        for j in 0..k {
            if cnt[j] > 0 {
                cost -= s[j] / cnt[j] as f64;
            }
        }
        cost /= n as f64;
        if cost < best.cost {
            best.cost = cost;
            best.labels.copy_from_slice(&labels);
        }
    }
    Ok(best)
}
