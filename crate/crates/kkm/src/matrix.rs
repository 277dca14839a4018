//! Dense square matrices: storage for precomputed kernels, the symmetric
//! matrix exponential used by the heat kernel, and the KKM1 on-disk format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;

/// Row-major dense square matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer; `data.len()` must be `n*n`.
    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "buffer of length {} cannot back a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(SquareMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute column sum (induced 1-norm).
    pub fn one_norm(&self) -> f64 {
        let mut sums = vec![0.0; self.n];
        for row in self.data.chunks(self.n) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Checks |M[i][j] - M[j][i]| <= tol * max(1, max |entry|) everywhere.
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        let scale = self.max_abs().max(1.0);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let asym = (self.get(i, j) - self.get(j, i)).abs();
                if asym > tol * scale {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        asym,
                        tol: tol * scale,
                    });
                }
            }
        }
        Ok(())
    }

    /// Replaces M with (M + M^T)/2.
    pub fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, avg);
                self.set(j, i, avg);
            }
        }
    }

    /// Dense product, parallel over output rows; each output entry is a
    /// sequential sum so the result does not depend on thread count.
    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.n, other.n, "matmul size mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        par::for_each_chunk_mut(&mut out, n, |i, out_row| {
            let a_row = self.row(i);
            for (kk, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(kk);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        });
        SquareMatrix { n, data: out }
    }

    fn scale(&self, factor: f64) -> SquareMatrix {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn add_assign(&mut self, other: &SquareMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

const TAYLOR_TERMS: u32 = 18;

/// exp(M) for symmetric M via scaling-and-squaring: scale so the 1-norm of
/// M/2^s is at most 0.5, run the Taylor series to term 18, square s times,
/// then symmetrize the result to scrub rounding asymmetry.
pub fn matrix_exp_symmetric(m: &SquareMatrix) -> Result<SquareMatrix> {
    m.check_symmetric(1e-9)?;
    let n = m.n();
    let norm = m.one_norm();
    let mut s = 0u32;
    while norm / f64::powi(2.0, s as i32) > 0.5 {
        s += 1;
    }
    let a = m.scale(f64::powi(2.0, -(s as i32)));

    let mut result = SquareMatrix::identity(n);
    let mut term = SquareMatrix::identity(n);
    for t in 1..=TAYLOR_TERMS {
        term = term.matmul(&a).scale(1.0 / t as f64);
        result.add_assign(&term);
    }
    for _ in 0..s {
        result = result.matmul(&result);
    }
    result.symmetrize();
    Ok(result)
}

const KKM1_MAGIC: &[u8; 4] = b"KKM1";

/// Writes the matrix in the KKM1 binary format: magic "KKM1", u64 n
/// (little-endian), then n^2 little-endian f64 values row-major.
pub fn write_kkm1(path: &Path, m: &SquareMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(KKM1_MAGIC)?;
    w.write_all(&(m.n() as u64).to_le_bytes())?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a KKM1 file written by [`write_kkm1`].
pub fn read_kkm1(path: &Path) -> Result<SquareMatrix> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != KKM1_MAGIC {
        return Err(Error::BadKernelFile(format!(
            "bad magic {magic:?}, expected \"KKM1\""
        )));
    }
    let mut n_bytes = [0u8; 8];
    r.read_exact(&mut n_bytes)?;
    let n = u64::from_le_bytes(n_bytes);
    let expected = 12u64
        .checked_add(
            n.checked_mul(n)
                .and_then(|nn| nn.checked_mul(8))
                .ok_or_else(|| {
                    Error::BadKernelFile(format!("n = {n} overflows the expected file size"))
                })?,
        )
        .ok_or_else(|| Error::BadKernelFile("file size overflow".into()))?;
    if file_len != expected {
        return Err(Error::BadKernelFile(format!(
            "file is {file_len} bytes, expected {expected} for n = {n}"
        )));
    }
    let n = n as usize;
    let mut data = vec![0.0f64; n * n];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    SquareMatrix::from_vec(n, data)
}

/// Reads a headerless numeric CSV as an n x n matrix.
pub fn read_matrix_csv(path: &Path) -> Result<SquareMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut data: Vec<f64> = Vec::new();
    let mut n_cols: Option<usize> = None;
    let mut n_rows = 0usize;
    for record in reader.records() {
        let record = record?;
        match n_cols {
            None => n_cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::DimensionMismatch(format!(
                    "row {n_rows} has {} cells, expected {c}",
                    record.len()
                )))
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: n_rows,
                column: col.to_string(),
                value: cell.to_string(),
            })?;
            data.push(v);
        }
        n_rows += 1;
    }
    let n_cols = n_cols.unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::EmptyDataset);
    }
    if n_rows != n_cols {
        return Err(Error::NotSquare {
            rows: n_rows,
            cols: n_cols,
        });
    }
    SquareMatrix::from_vec(n_rows, data)
}
