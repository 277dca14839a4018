//! Kernel functions over a dataset: closed-form kernels evaluated on demand
//! plus precomputed Gram matrices, behind one evaluation interface.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::par;

/// A kernel choice with its parameters, validated at construction.
#[derive(Debug, Clone)]
pub enum KernelSpec {
    /// exp(-|x - y|^2 / kappa), kappa > 0.
    Gaussian { kappa: f64 },
    /// <x, y>.
    Linear,
    /// (<x, y> + coef0)^degree, degree >= 1.
    Polynomial { degree: u32, coef0: f64 },
    /// An explicit symmetric matrix; positive semidefiniteness is the
    /// caller's concern (graph kernels are generally indefinite).
    Precomputed(SquareMatrix),
}

impl KernelSpec {
    pub fn gaussian(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param(
                "kappa",
                format!("need 0 < kappa < inf, got {kappa}"),
            ));
        }
        Ok(KernelSpec::Gaussian { kappa })
    }

    pub fn polynomial(degree: u32, coef0: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::param("degree", "need degree >= 1"));
        }
        if !coef0.is_finite() {
            return Err(Error::param(
                "coef0",
                format!("must be finite, got {coef0}"),
            ));
        }
        Ok(KernelSpec::Polynomial { degree, coef0 })
    }

    pub fn precomputed(matrix: SquareMatrix) -> Result<Self> {
        matrix.check_symmetric(1e-9)?;
        Ok(KernelSpec::Precomputed(matrix))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Precomputed(_) => "precomputed",
        }
    }

    /// Parameter summary for report rows; semicolon-separated to stay a
    /// single CSV field.
    pub fn params_string(&self) -> String {
        match self {
            KernelSpec::Gaussian { kappa } => format!("kappa={kappa}"),
            KernelSpec::Linear => String::new(),
            KernelSpec::Polynomial { degree, coef0 } => {
                format!("degree={degree};coef0={coef0}")
            }
            KernelSpec::Precomputed(m) => format!("n={}", m.n()),
        }
    }

    pub fn precomputed_matrix(&self) -> Option<&SquareMatrix> {
        match self {
            KernelSpec::Precomputed(m) => Some(m),
            _ => None,
        }
    }
}

/// A kernel bound to a dataset, ready to evaluate entries K(i, j).
///
/// Gaussian evaluation caches squared norms so that K(i, i) comes out as
/// exp(-0.0) = 1 exactly: the diagonal squared distance is computed as
/// sn[i] + sn[i] - 2 * dot(x_i, x_i) with dot accumulated in the same order
/// as the cached norm, which cancels bitwise.
pub struct Kernel<'a> {
    spec: &'a KernelSpec,
    data: &'a Dataset,
    sq_norms: Vec<f64>,
    counter: Option<&'a EvalCounter>,
}

/// Tallies kernel evaluations for work accounting. Attached via
/// [`Kernel::with_counter`]; the count is advisory (relaxed ordering) and
/// never feeds back into results.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn new() -> Self {
        EvalCounter(AtomicU64::new(0))
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> Kernel<'a> {
    pub fn new(spec: &'a KernelSpec, data: &'a Dataset) -> Result<Self> {
        if let KernelSpec::Precomputed(m) = spec {
            if m.n() != data.n() {
                return Err(Error::KernelSizeMismatch {
                    kernel_n: m.n(),
                    data_n: data.n(),
                });
            }
        }
        let sq_norms = match spec {
            KernelSpec::Gaussian { .. } => (0..data.n())
                .map(|i| dot(data.row(i), data.row(i)))
                .collect(),
            _ => Vec::new(),
        };
        Ok(Kernel {
            spec,
            data,
            sq_norms,
            counter: None,
        })
    }

    pub fn with_counter(mut self, counter: &'a EvalCounter) -> Self {
        self.counter = Some(counter);
        self
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn spec(&self) -> &KernelSpec {
        self.spec
    }

    pub fn dataset(&self) -> &Dataset {
        self.data
    }

    #[inline]
    pub fn eval(&self, i: usize, j: usize) -> f64 {
        if let Some(c) = self.counter {
            c.0.fetch_add(1, Ordering::Relaxed);
        }
        match self.spec {
            KernelSpec::Gaussian { kappa } => {
                let sq = self.sq_norms[i] + self.sq_norms[j]
                    - 2.0 * dot(self.data.row(i), self.data.row(j));
                (-sq.max(0.0) / kappa).exp()
            }
            KernelSpec::Linear => dot(self.data.row(i), self.data.row(j)),
            KernelSpec::Polynomial { degree, coef0 } => {
                (dot(self.data.row(i), self.data.row(j)) + coef0).powi(*degree as i32)
            }
            KernelSpec::Precomputed(m) => m.get(i, j),
        }
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.eval(i, i)
    }

    /// Direct row access into a precomputed kernel matrix, letting hot
    /// loops skip the per-entry dispatch. None for computed kernels, and
    /// whenever an eval counter is attached (the counter must observe
    /// every lookup, so callers fall back to `eval`).
    #[inline]
    pub fn fast_row(&self, i: usize) -> Option<&[f64]> {
        if self.counter.is_some() {
            return None;
        }
        match self.spec {
            KernelSpec::Precomputed(m) => Some(m.row(i)),
            _ => None,
        }
    }

    /// Fills out[c] = K(i, cols[c]).
    pub fn row_into(&self, i: usize, cols: &[usize], out: &mut [f64]) {
        debug_assert_eq!(cols.len(), out.len());
        for (o, &j) in out.iter_mut().zip(cols) {
            *o = self.eval(i, j);
        }
    }

    /// Row-major rows.len() x cols.len() block of kernel values, rows
    /// computed in parallel.
    pub fn gram_block(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; rows.len() * cols.len()];
        par::for_each_chunk_mut(&mut out, cols.len().max(1), |r, chunk| {
            if !chunk.is_empty() {
                self.row_into(rows[r], cols, chunk);
            }
        });
        out
    }

    /// Full dense Gram matrix.
    pub fn materialize(&self) -> SquareMatrix {
        let n = self.n();
        if let KernelSpec::Precomputed(m) = self.spec {
            return m.clone();
        }
        let mut out = SquareMatrix::zeros(n);
        let cols: Vec<usize> = (0..n).collect();
        par::for_each_chunk_mut(out.data_mut(), n, |i, row| {
            self.row_into(i, &cols, row);
        });
        out
    }

    /// Scale estimate gamma = sqrt(max_i |K(i, i)|), with diagnostics for
    /// kernels whose diagonal vanishes (graph adjacency kernels), where the
    /// fallback sqrt(max |K(i, j)|) is reported instead.
    pub fn compute_gamma(&self) -> Gamma {
        let n = self.n();
        let max_abs_diag = (0..n).map(|i| self.diag(i).abs()).fold(0.0, f64::max);
        let sqrt_max_abs_diag = max_abs_diag.sqrt();
        let sqrt_max_abs_entry = match self.spec {
            KernelSpec::Precomputed(m) => Some(m.max_abs().sqrt()),
            _ => None,
        };
        let diag_degenerate = max_abs_diag == 0.0;
        let value = if diag_degenerate {
            sqrt_max_abs_entry.unwrap_or(0.0)
        } else {
            sqrt_max_abs_diag
        };
        Gamma {
            value,
            sqrt_max_abs_diag,
            sqrt_max_abs_entry,
            diag_degenerate,
        }
    }
}

/// Kernel scale report. `value` is what downstream sizing (window lengths)
/// uses; when `diag_degenerate` is set it came from the off-diagonal
/// fallback and is an order-of-magnitude figure, not a norm bound.
#[derive(Debug, Clone, Copy)]
pub struct Gamma {
    pub value: f64,
    pub sqrt_max_abs_diag: f64,
    pub sqrt_max_abs_entry: Option<f64>,
    pub diag_degenerate: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;

    fn pair_dataset() -> Dataset {
        // |x - y|^2 = 4 between the two rows.
        Dataset::new("pair", 2, 2, vec![0.0, 0.0, 2.0, 0.0], None).unwrap()
    }

    #[test]
    fn gaussian_matches_closed_form() {
        let ds = pair_dataset();
        let spec = KernelSpec::gaussian(4.0).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        assert!((k.eval(0, 1) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((k.eval(0, 1) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn gaussian_diagonal_is_exactly_one() {
        let ds = gen_blobs(40, 3, 5, 2.0, 31).unwrap();
        let spec = KernelSpec::gaussian(0.7).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        for i in 0..ds.n() {
            assert_eq!(k.diag(i), 1.0);
        }
        let g = k.compute_gamma();
        assert_eq!(g.value, 1.0);
        assert!(!g.diag_degenerate);
    }

    #[test]
    fn gaussian_values_stay_in_unit_interval() {
        // Far-apart pairs may underflow to exactly 0, which is fine.
        let ds = gen_blobs(30, 2, 3, 3.0, 7).unwrap();
        let spec = KernelSpec::gaussian(1.3).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        for i in 0..ds.n() {
            for j in 0..ds.n() {
                let v = k.eval(i, j);
                assert!((0.0..=1.0).contains(&v), "K({i},{j}) = {v}");
                if i == j {
                    assert_eq!(v, 1.0);
                }
            }
        }
    }

    #[test]
    fn linear_kernel_is_the_dot_product() {
        let ds = Dataset::new("two", 2, 2, vec![1.0, 2.0, 3.0, -1.0], None).unwrap();
        let k = Kernel::new(&KernelSpec::Linear, &ds).unwrap();
        assert_eq!(k.eval(0, 1), 1.0);
        assert_eq!(k.eval(1, 0), 1.0);
        assert_eq!(k.eval(0, 0), 5.0);
    }

    #[test]
    fn polynomial_kernel_matches_hand_expansion() {
        let ds = Dataset::new("two", 2, 2, vec![1.0, 2.0, 3.0, -1.0], None).unwrap();
        let spec = KernelSpec::polynomial(3, 1.0).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        // (1 + 1)^3
        assert_eq!(k.eval(0, 1), 8.0);
    }

    #[test]
    fn spec_constructors_validate_parameters() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(KernelSpec::polynomial(0, 1.0).is_err());
        let asym = SquareMatrix::from_vec(2, vec![1.0, 0.5, 0.2, 1.0]).unwrap();
        assert!(KernelSpec::precomputed(asym).is_err());
    }

    #[test]
    fn precomputed_gamma_uses_the_diagonal() {
        let m = SquareMatrix::from_vec(3, vec![2.25, 0.1, 0.0, 0.1, 0.16, 0.05, 0.0, 0.05, 1.0])
            .unwrap();
        let spec = KernelSpec::precomputed(m).unwrap();
        let ds = Dataset::new("idx", 3, 0, vec![], None).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let g = k.compute_gamma();
        assert_eq!(g.value, 1.5);
        assert!(!g.diag_degenerate);
    }

    #[test]
    fn zero_diagonal_gamma_falls_back_to_entries() {
        let m = SquareMatrix::from_vec(2, vec![0.0, 0.25, 0.25, 0.0]).unwrap();
        let spec = KernelSpec::precomputed(m).unwrap();
        let ds = Dataset::new("idx", 2, 0, vec![], None).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let g = k.compute_gamma();
        assert!(g.diag_degenerate);
        assert_eq!(g.sqrt_max_abs_diag, 0.0);
        assert_eq!(g.value, 0.5);
    }

    #[test]
    fn precomputed_size_must_match_dataset() {
        let m = SquareMatrix::identity(3);
        let spec = KernelSpec::precomputed(m).unwrap();
        let ds = pair_dataset();
        assert!(matches!(
            Kernel::new(&spec, &ds),
            Err(Error::KernelSizeMismatch {
                kernel_n: 3,
                data_n: 2
            })
        ));
    }

    #[test]
    fn eval_counter_tallies_every_evaluation() {
        let ds = gen_blobs(12, 2, 2, 1.0, 9).unwrap();
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let counter = EvalCounter::new();
        let k = Kernel::new(&spec, &ds).unwrap().with_counter(&counter);
        let rows = [0usize, 5, 7];
        let cols = [1usize, 2, 3, 4];
        k.gram_block(&rows, &cols);
        assert_eq!(counter.get(), 12);
        counter.reset();
        k.diag(3);
        assert_eq!(counter.get(), 1);
    }

    #[test]
    fn gram_block_agrees_with_eval_loop() {
        let ds = gen_blobs(25, 2, 3, 1.0, 4).unwrap();
        let spec = KernelSpec::gaussian(2.0).unwrap();
        let k = Kernel::new(&spec, &ds).unwrap();
        let rows = [3usize, 17, 8];
        let cols = [0usize, 24, 11, 5];
        let block = k.gram_block(&rows, &cols);
        for (r, &i) in rows.iter().enumerate() {
            for (c, &j) in cols.iter().enumerate() {
                assert_eq!(block[r * cols.len() + c], k.eval(i, j));
            }
        }
        let full = k.materialize();
        for i in 0..ds.n() {
            for j in 0..ds.n() {
                assert_eq!(full.get(i, j), k.eval(i, j));
            }
        }
    }
}
