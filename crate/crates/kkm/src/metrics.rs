//! Clustering quality measures: the kernel k-means objective, adjusted Rand
//! index, and normalized mutual information.
//!
//! Both agreement indices first recode labels by order of first appearance,
//! so any relabeling of either side produces bit-identical scores, and
//! comparing a partition against itself scores exactly 1.

use crate::centers::SparseCenter;
use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par;

/// Mean over the chosen points (all points when `subset` is None) of the
/// squared distance to the nearest center.
pub fn objective(kernel: &Kernel, centers: &[SparseCenter], subset: Option<&[usize]>) -> f64 {
    assert!(!centers.is_empty(), "objective needs at least one center");
    let count = subset.map_or(kernel.n(), <[usize]>::len);
    assert!(count > 0, "objective over an empty point set");
    let mins = par::map_indexed(count, |p| {
        let x = subset.map_or(p, |s| s[p]);
        centers
            .iter()
            .map(|c| c.sq_dist(kernel, x))
            .fold(f64::INFINITY, f64::min)
    });
    mins.iter().sum::<f64>() / count as f64
}

/// Recode labels to 0..k by first appearance.
fn canonicalize(labels: &[u32]) -> (Vec<u32>, usize) {
    let mut map: Vec<u32> = Vec::new();
    let coded = labels
        .iter()
        .map(|&l| match map.iter().position(|&m| m == l) {
            Some(c) => c as u32,
            None => {
                map.push(l);
                (map.len() - 1) as u32
            }
        })
        .collect();
    (coded, map.len())
}

struct Contingency {
    cells: Vec<u64>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    n: u64,
}

fn contingency(pred: &[u32], truth: &[u32]) -> Result<Contingency> {
    if pred.len() != truth.len() {
        return Err(Error::LabelLengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (p, kp) = canonicalize(pred);
    let (t, kt) = canonicalize(truth);
    let mut cells = vec![0u64; kp * kt];
    let mut rows = vec![0u64; kp];
    let mut cols = vec![0u64; kt];
    for (&a, &b) in p.iter().zip(&t) {
        cells[a as usize * kt + b as usize] += 1;
        rows[a as usize] += 1;
        cols[b as usize] += 1;
    }
    Ok(Contingency {
        cells,
        rows,
        cols,
        n: pred.len() as u64,
    })
}

#[inline]
fn pairs(m: u64) -> u64 {
    m * m.saturating_sub(1) / 2
}

/// Adjusted Rand index in [-1, 1]. Pair counts are exact integers; only the
/// final expectation and ratio are floating point. A vanishing denominator
/// (both partitions trivial) scores 1.
pub fn ari(pred: &[u32], truth: &[u32]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let index: u64 = c.cells.iter().map(|&m| pairs(m)).sum();
    let p_pairs: u64 = c.rows.iter().map(|&m| pairs(m)).sum();
    let t_pairs: u64 = c.cols.iter().map(|&m| pairs(m)).sum();
    let all_pairs = pairs(c.n) as f64;
    if all_pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = p_pairs as f64 * t_pairs as f64 / all_pairs;
    let denom = 0.5 * (p_pairs + t_pairs) as f64 - expected;
    if denom.abs() <= 1e-12 * ((p_pairs + t_pairs) as f64).max(1.0) {
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / denom)
}

fn entropy(counts: &[u64], n: u64) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| {
            let p = m as f64 / n;
            -(p * p.ln())
        })
        .sum()
}

/// Normalized mutual information I(P; T) / sqrt(H(P) H(T)) with natural
/// logarithms, in [0, 1]. When either partition has a single cluster the
/// 0 / 0 case is defined as 0.
pub fn nmi(pred: &[u32], truth: &[u32]) -> Result<f64> {
    let c = contingency(pred, truth)?;
    let hp = entropy(&c.rows, c.n);
    let ht = entropy(&c.cols, c.n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    // Joint entropy iterated in row-major cell order: for identical coded
    // partitions the diagonal cells reproduce hp's summands in hp's order,
    // making the mutual information and the ratio exact.
    let hpt = entropy(&c.cells, c.n);
    let info = hp + ht - hpt;
    Ok(info / (hp * ht).sqrt())
}
