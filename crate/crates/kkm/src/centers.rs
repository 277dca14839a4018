//! Centers represented implicitly as weighted point combinations
//! C = sum_p w_p phi(x_p), together with the squared-distance algebra every
//! solver shares:
//!
//!   |phi(x) - C|^2 = K(x, x) - 2 <phi(x), C> + <C, C>
//!
//! with <phi(x), C> = sum_p w_p K(x, p) and <C, C> the weighted double sum.

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par;

/// A sparse weighted combination of dataset points with its cached
/// self inner product. Weights are nonnegative and total at most 1 (a total
/// below 1 encodes a decayed center, not a convex mean).
#[derive(Debug, Clone)]
pub struct SparseCenter {
    entries: Vec<(u32, f64)>,
    total_weight: f64,
    self_ip: f64,
}

impl SparseCenter {
    /// A single dataset point with weight 1.
    pub fn singleton(kernel: &Kernel, index: usize) -> Self {
        SparseCenter {
            entries: vec![(index as u32, 1.0)],
            total_weight: 1.0,
            self_ip: kernel.diag(index),
        }
    }

    /// The uniform mean of a multiset of indices.
    pub fn mean_of(kernel: &Kernel, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySubset);
        }
        let w = 1.0 / indices.len() as f64;
        Self::from_weighted(kernel, indices.iter().map(|&i| (i, w)))
    }

    /// Builds from (index, weight) pairs; duplicate indices accumulate.
    pub fn from_weighted(
        kernel: &Kernel,
        weighted: impl IntoIterator<Item = (usize, f64)>,
    ) -> Result<Self> {
        let n = kernel.n();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (i, w) in weighted {
            if i >= n {
                return Err(Error::IndexOutOfBounds { index: i, size: n });
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::param(
                    "weight",
                    format!("need finite weight >= 0, got {w}"),
                ));
            }
            entries.push((i as u32, w));
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|e| e.1 > 0.0);
        if merged.is_empty() {
            return Err(Error::EmptySubset);
        }
        let total_weight: f64 = merged.iter().map(|e| e.1).sum();
        if total_weight > 1.0 + 1e-9 {
            return Err(Error::param(
                "weights",
                format!("total weight must be in (0, 1], got {total_weight}"),
            ));
        }

        let mut self_ip = 0.0;
        for a in 0..merged.len() {
            let (ia, wa) = merged[a];
            self_ip += wa * wa * kernel.diag(ia as usize);
            for &(ib, wb) in &merged[a + 1..] {
                self_ip += 2.0 * wa * wb * kernel.eval(ia as usize, ib as usize);
            }
        }
        Ok(SparseCenter {
            entries: merged,
            total_weight,
            self_ip,
        })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Cached <C, C>.
    pub fn self_ip(&self) -> f64 {
        self.self_ip
    }

    /// <phi(x_index), C>.
    pub fn point_ip(&self, kernel: &Kernel, index: usize) -> f64 {
        self.entries
            .iter()
            .map(|&(p, w)| w * kernel.eval(index, p as usize))
            .sum()
    }

    /// |phi(x_index) - C|^2 via the cached self inner product.
    pub fn sq_dist(&self, kernel: &Kernel, index: usize) -> f64 {
        kernel.diag(index) - 2.0 * self.point_ip(kernel, index) + self.self_ip
    }

    /// <C, D> between two centers.
    pub fn center_ip(&self, kernel: &Kernel, other: &SparseCenter) -> f64 {
        let mut acc = 0.0;
        for &(p, wp) in &self.entries {
            for &(q, wq) in &other.entries {
                acc += wp * wq * kernel.eval(p as usize, q as usize);
            }
        }
        acc
    }

    /// |C - D|^2 = <C,C> - 2<C,D> + <D,D>.
    pub fn sq_gap(&self, kernel: &Kernel, other: &SparseCenter) -> f64 {
        self.self_ip - 2.0 * self.center_ip(kernel, other) + other.self_ip
    }

    /// Dense weight vector of length n (mostly for comparisons against
    /// dense reference implementations).
    pub fn dense_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; n];
        for &(i, wi) in &self.entries {
            w[i as usize] += wi;
        }
        w
    }
}

/// Assigns each listed point to its nearest center (squared kernel
/// distance), ties resolved toward the lowest center index. Points are
/// processed in parallel; each point's scan is sequential, so the result
/// does not depend on thread count.
pub fn assign_batch(kernel: &Kernel, centers: &[SparseCenter], points: &[usize]) -> Vec<u32> {
    assert!(!centers.is_empty(), "no centers to assign to");
    par::map_indexed(points.len(), |p| {
        let x = points[p];
        let mut best = 0u32;
        let mut best_d = centers[0].sq_dist(kernel, x);
        for (j, c) in centers.iter().enumerate().skip(1) {
            let d = c.sq_dist(kernel, x);
            if d < best_d {
                best_d = d;
                best = j as u32;
            }
        }
        best
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::kernels::KernelSpec;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn duplicate_indices_accumulate() {
        let ds = gen_blobs(6, 2, 2, 1.0, 1).unwrap();
        let spec = KernelSpec::Linear;
        let k = Kernel::new(&spec, &ds).unwrap();
        let a = SparseCenter::from_weighted(&k, vec![(2, 0.2), (2, 0.3), (4, 0.5)]).unwrap();
        let b = SparseCenter::from_weighted(&k, vec![(2, 0.5), (4, 0.5)]).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.self_ip(), b.self_ip());
    }

    #[test]
    fn cached_self_ip_matches_brute_force() {
        let ds = gen_blobs(12, 3, 3, 2.0, 8).unwrap();
        let spec = KernelSpec::gaussian(1.5).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for _ in 0..20 {
            let m = rng.random_range(1..=6);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..12)).collect();
            let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum::<f64>().max(1e-12);
            for wi in &mut w {
                *wi /= s;
            }
            let c = SparseCenter::from_weighted(&k, idx.iter().copied().zip(w.iter().copied()))
                .unwrap();
            let dense = c.dense_weights(12);
            let mut brute = 0.0;
            for i in 0..12 {
                for j in 0..12 {
                    brute += dense[i] * dense[j] * k.eval(i, j);
                }
            }
            assert!(
                (c.self_ip() - brute).abs() < 1e-9,
                "{} vs {brute}",
                c.self_ip()
            );
        }
    }

    #[test]
    fn total_weight_above_one_is_rejected() {
        let ds = gen_blobs(4, 2, 2, 1.0, 2).unwrap();
        let spec = KernelSpec::Linear;
        let k = Kernel::new(&spec, &ds).unwrap();
        assert!(SparseCenter::from_weighted(&k, vec![(0, 0.7), (1, 0.7)]).is_err());
        assert!(SparseCenter::from_weighted(&k, vec![(0, 0.0)]).is_err());
        assert!(SparseCenter::from_weighted(&k, vec![(9, 0.5)]).is_err());
    }

    #[test]
    fn sq_dist_expands_the_inner_product_formula() {
        // Linear kernel on 1-d points: distances are plain squared
        // differences to the weighted mean.
        let ds = crate::data::Dataset::new("line", 3, 1, vec![0.0, 1.0, 10.0], None).unwrap();
        let spec = KernelSpec::Linear;
        let k = Kernel::new(&spec, &ds).unwrap();
        let c = SparseCenter::mean_of(&k, &[0, 1]).unwrap();
        // Center = 0.5, so distances are 0.25, 0.25, 90.25.
        assert!((c.sq_dist(&k, 0) - 0.25).abs() < 1e-12);
        assert!((c.sq_dist(&k, 1) - 0.25).abs() < 1e-12);
        assert!((c.sq_dist(&k, 2) - 90.25).abs() < 1e-12);
    }

    #[test]
    fn assignment_breaks_ties_toward_lower_center_index() {
        let ds = crate::data::Dataset::new("line", 3, 1, vec![0.0, 2.0, 1.0], None).unwrap();
        let spec = KernelSpec::Linear;
        let k = Kernel::new(&spec, &ds).unwrap();
        let centers = vec![
            SparseCenter::singleton(&k, 0),
            SparseCenter::singleton(&k, 1),
        ];
        // Point 2 sits exactly between centers 0 and 1.
        let labels = assign_batch(&k, &centers, &[0, 1, 2]);
        assert_eq!(labels, vec![0, 1, 0]);
    }

    #[test]
    fn centroid_decomposition_identity_holds() {
        // sum_{x in S} d(x, C)^2 = sum_{x in S} d(x, cm(S))^2 + |S| d(C, cm(S))^2
        let ds = gen_blobs(15, 3, 2, 2.5, 77).unwrap();
        let spec = KernelSpec::gaussian(2.0).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let subset = [1usize, 4, 7, 9, 14];
        let cm = SparseCenter::mean_of(&k, &subset).unwrap();
        let c = SparseCenter::mean_of(&k, &[0, 2, 3]).unwrap();
        let lhs: f64 = subset.iter().map(|&x| c.sq_dist(&k, x)).sum();
        let rhs: f64 = subset.iter().map(|&x| cm.sq_dist(&k, x)).sum::<f64>()
            + subset.len() as f64 * cm.sq_gap(&k, &c);
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn gaussian_norm_and_cost_bounds_hold() {
        let ds = gen_blobs(20, 2, 2, 2.0, 5).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let gamma = k.compute_gamma().value;
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = rng.random_range(1..=8);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..20)).collect();
            let c = SparseCenter::mean_of(&k, &idx).unwrap();
            assert!(c.self_ip().sqrt() <= gamma + 1e-9);
            for x in 0..20 {
                assert!(c.sq_dist(&k, x) <= 4.0 * gamma * gamma + 1e-9);
            }
        }
    }
}
