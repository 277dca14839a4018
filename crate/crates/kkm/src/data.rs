//! Datasets: CSV loading, synthetic generators, and the graph-derived
//! kernels (k-nn and heat) built from them.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::matrix::{matrix_exp_symmetric, SquareMatrix};
use crate::par;

/// An n x d point set with optional ground-truth labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    name: String,
    n: usize,
    d: usize,
    points: Vec<f64>,
    labels: Option<Vec<u32>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        d: usize,
        points: Vec<f64>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if points.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "point buffer has {} values, expected {n} x {d}",
                points.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {n} points",
                    l.len()
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            n,
            d,
            points,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }
}

/// Loads a CSV with a header row. All columns are numeric features except the
/// optional label column, which is integer-coded by first appearance.
pub fn load_csv(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::LabelColumnMissing(name.to_string(), headers.join(", ")))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|c| Some(*c) != label_idx)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::NoFeatureColumns);
    }

    let mut points = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record?;
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: n,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            points.push(v);
        }
        if let Some(li) = label_idx {
            raw_labels.push(record.get(li).unwrap_or("").to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let labels = label_idx.map(|_| {
        let mut seen: Vec<String> = Vec::new();
        raw_labels
            .iter()
            .map(|raw| match seen.iter().position(|s| s == raw) {
                Some(code) => code as u32,
                None => {
                    seen.push(raw.clone());
                    (seen.len() - 1) as u32
                }
            })
            .collect()
    });

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, n, feature_cols.len(), points, labels)
}

/// Isotropic Gaussian blobs around k component centers drawn uniformly from
/// [-10, 10]^d. Points are emitted component by component (component i gets
/// n/k points, the first n mod k components one extra); labels record the
/// generating component. Deterministic given the seed: the stream draws all
/// centers first, then each point's offsets in order.
pub fn gen_blobs(n: usize, k: usize, d: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if k == 0 || n < k {
        return Err(Error::param(
            "k",
            format!("need n >= k >= 1, got n = {n}, k = {k}"),
        ));
    }
    if d == 0 {
        return Err(Error::param("d", "need d >= 1"));
    }
    if !(spread >= 0.0) {
        return Err(Error::param(
            "spread",
            format!("need spread >= 0, got {spread}"),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let centers: Vec<f64> = (0..k * d).map(|_| rng.random_range(-10.0..10.0)).collect();

    let mut points = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for comp in 0..k {
        let count = n / k + usize::from(comp < n % k);
        for _ in 0..count {
            for dim in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                points.push(centers[comp * d + dim] + spread * z);
            }
            labels.push(comp as u32);
        }
    }
    Dataset::new(
        format!("blobs-n{n}-k{k}-d{d}-sp{spread}-s{seed}"),
        n,
        d,
        points,
        Some(labels),
    )
}

/// Concentric circles in 2D, one ring per radius, labels = ring index.
/// Each point sits at a uniform angle with radius r + noise * N(0,1)
/// (radial noise), so its distance from the origin is within 4*noise of r
/// except with probability ~6e-5.
pub fn gen_circles(n: usize, radii: &[f64], noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if radii.is_empty() {
        return Err(Error::param("radii", "need at least one radius"));
    }
    if !radii.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::param(
            "radii",
            format!("must be strictly increasing, got {radii:?}"),
        ));
    }
    if !(radii[0] > 0.0) {
        return Err(Error::param(
            "radii",
            format!("must be positive, got {radii:?}"),
        ));
    }
    if !(noise >= 0.0) {
        return Err(Error::param(
            "noise",
            format!("need noise >= 0, got {noise}"),
        ));
    }
    let m = radii.len();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for (ring, &r) in radii.iter().enumerate() {
        let count = n / m + usize::from(ring < n % m);
        for _ in 0..count {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let z: f64 = rng.sample(StandardNormal);
            let rad = r + noise * z;
            points.push(rad * theta.cos());
            points.push(rad * theta.sin());
            labels.push(ring as u32);
        }
    }
    let radii_tag: Vec<String> = radii.iter().map(|r| r.to_string()).collect();
    Dataset::new(
        format!("circles-n{n}-r{}-no{noise}-s{seed}", radii_tag.join("+")),
        n,
        2,
        points,
        Some(labels),
    )
}

/// Synthetic stand-in sized like the classic pen-digits benchmark:
/// 10992 points, 16 features, 10 classes, fully deterministic.
pub fn pendigits_standin() -> Dataset {
    let mut ds = gen_blobs(10_992, 10, 16, 2.0, 1016).expect("static parameters are valid");
    ds.set_name("pendigits-standin");
    ds
}

/// Union-symmetrized k-nearest-neighbor graph: edge {i,j} exists when i is
/// among j's k_nn Euclidean nearest neighbors or vice versa. No self-loops.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    neighbors: Vec<Vec<u32>>,
    degrees: Vec<u32>,
    k_nn: usize,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> u32 {
        self.degrees[i]
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Brute-force exact neighbor search (O(n^2 d)), ties broken by lower index
/// so the graph is deterministic.
pub fn build_knn_graph(dataset: &Dataset, k_nn: usize) -> Result<KnnGraph> {
    let n = dataset.n();
    if k_nn == 0 || k_nn >= n {
        return Err(Error::param(
            "k_nn",
            format!("need 1 <= k_nn < n = {n}, got {k_nn}"),
        ));
    }

    let chosen: Vec<Vec<u32>> = par::map_indexed(n, |i| {
        // Sorted buffer of the current best (distance, index) pairs.
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k_nn + 1);
        let xi = dataset.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let cand = (sq_dist(xi, dataset.row(j)), j as u32);
            if best.len() == k_nn && cmp_pair(&cand, best.last().unwrap()).is_ge() {
                continue;
            }
            let pos = best.partition_point(|b| cmp_pair(b, &cand).is_lt());
            best.insert(pos, cand);
            best.truncate(k_nn);
        }
        best.into_iter().map(|(_, j)| j).collect()
    });

    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (i, sel) in chosen.iter().enumerate() {
        for &j in sel {
            neighbors[i].push(j);
            neighbors[j as usize].push(i as u32);
        }
    }
    for row in neighbors.iter_mut() {
        row.sort_unstable();
        row.dedup();
    }
    let degrees: Vec<u32> = neighbors.iter().map(|r| r.len() as u32).collect();
    // Union symmetrization with k_nn >= 1 gives every vertex at least its own
    // selections, so isolation is impossible.
    assert!(
        degrees.iter().all(|&d| d >= 1),
        "isolated vertex after symmetrization"
    );
    debug_assert!(degrees.iter().all(|&d| d as usize >= k_nn));
    Ok(KnnGraph {
        neighbors,
        degrees,
        k_nn,
    })
}

#[inline]
fn cmp_pair(a: &(f64, u32), b: &(f64, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Dense D^-1 A D^-1 for a built graph: entry (i,j) is 1/(deg_i * deg_j) on
/// edges, 0 elsewhere (zero diagonal; generally indefinite).
pub fn knn_kernel_from_graph(graph: &KnnGraph) -> SquareMatrix {
    let n = graph.n();
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        let di = graph.degrees[i] as f64;
        for &j in &graph.neighbors[i] {
            m.set(i, j as usize, 1.0 / (di * graph.degrees[j as usize] as f64));
        }
    }
    m
}

/// Builds the k-nn kernel D^-1 A D^-1 as a precomputed kernel spec.
pub fn build_knn_kernel(dataset: &Dataset, k_nn: usize) -> Result<KernelSpec> {
    let graph = build_knn_graph(dataset, k_nn)?;
    KernelSpec::precomputed(knn_kernel_from_graph(&graph))
}

/// Which matrix the heat kernel exponentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatVariant {
    /// exp(-t * N) with N = D^-1/2 A D^-1/2, as written in the source
    /// formula. Note every diagonal entry of this matrix is >= 1.
    #[default]
    Adjacency,
    /// exp(-t * (I - N)) = e^-t * exp(t * N), the graph-Laplacian
    /// convention; diagonal entries are < 1 for t > 0.
    Laplacian,
}

const HEAT_MAX_N: usize = 20_000;

/// Dense heat kernel on the k-nn graph. Capped at n <= 20000 (dense O(n^3)
/// exponential).
pub fn build_heat_kernel(
    dataset: &Dataset,
    k_nn: usize,
    t: f64,
    variant: HeatVariant,
) -> Result<KernelSpec> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("need 0 < t < inf, got {t}")));
    }
    let n = dataset.n();
    if n > HEAT_MAX_N {
        return Err(Error::HeatKernelTooLarge { n, max: HEAT_MAX_N });
    }
    let graph = build_knn_graph(dataset, k_nn)?;

    // -t * N, or -t * (I - N) for the laplacian variant.
    let mut arg = SquareMatrix::zeros(n);
    for i in 0..n {
        let di = graph.degrees[i] as f64;
        for &j in &graph.neighbors[i] {
            let nij = 1.0 / (di * graph.degrees[j as usize] as f64).sqrt();
            arg.set(i, j as usize, t * nij);
        }
    }
    if variant == HeatVariant::Adjacency {
        for i in 0..n {
            for j in 0..n {
                let v = arg.get(i, j);
                if v != 0.0 {
                    arg.set(i, j, -v);
                }
            }
        }
    } else {
        for i in 0..n {
            arg.set(i, i, arg.get(i, i) - t);
        }
    }
    KernelSpec::precomputed(matrix_exp_symmetric(&arg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_csv_codes_labels_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        std::fs::write(&path, "a,b,label\n1,2,x\n3,4,x\n5,6,y\n").unwrap();
        let ds = load_csv(&path, Some("label")).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.labels(), Some(&[0, 0, 1][..]));
        assert_eq!(ds.row(2), &[5.0, 6.0]);
        assert_eq!(ds.name(), "tiny");
    }

    #[test]
    fn load_csv_missing_label_column_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            load_csv(&path, Some("label")),
            Err(Error::LabelColumnMissing(..))
        ));
    }

    #[test]
    fn load_csv_rejects_non_numeric_and_ragged() {
        let dir = tempfile::tempdir().unwrap();
        let bad_cell = dir.path().join("bad.csv");
        std::fs::write(&bad_cell, "a,b\n1,oops\n").unwrap();
        assert!(matches!(
            load_csv(&bad_cell, None),
            Err(Error::NonNumericCell { row: 0, .. })
        ));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "a,b\n1,2\n3\n").unwrap();
        assert!(matches!(load_csv(&ragged, None), Err(Error::Csv(_))));
    }

    #[test]
    fn blobs_with_zero_spread_give_distinct_component_points() {
        let ds = gen_blobs(2, 2, 1, 0.0, 9).unwrap();
        assert_eq!(ds.labels(), Some(&[0, 1][..]));
        assert_ne!(ds.row(0), ds.row(1));
    }

    #[test]
    fn generators_are_reproducible_bitwise() {
        let a = gen_blobs(50, 3, 4, 1.5, 1234).unwrap();
        let b = gen_blobs(50, 3, 4, 1.5, 1234).unwrap();
        assert_eq!(a.points(), b.points());
        assert_eq!(a.labels(), b.labels());

        let c = gen_circles(40, &[1.0, 2.0], 0.1, 77).unwrap();
        let d = gen_circles(40, &[1.0, 2.0], 0.1, 77).unwrap();
        assert_eq!(c.points(), d.points());
    }

    #[test]
    fn noiseless_circle_points_sit_on_the_unit_circle() {
        let ds = gen_circles(4, &[1.0], 0.0, 3).unwrap();
        assert_eq!(ds.n(), 4);
        for i in 0..4 {
            let r = ds.row(i);
            let rad = (r[0] * r[0] + r[1] * r[1]).sqrt();
            assert!((rad - 1.0).abs() < 1e-12);
            assert_eq!(ds.labels().unwrap()[i], 0);
        }
    }

    #[test]
    fn circle_radii_stay_within_four_sigma_bands() {
        let ds = gen_circles(2000, &[1.0, 3.0], 0.05, 2024).unwrap();
        for i in 0..ds.n() {
            let r = ds.row(i);
            let rad = (r[0] * r[0] + r[1] * r[1]).sqrt();
            match ds.labels().unwrap()[i] {
                0 => assert!((0.8..=1.2).contains(&rad), "class 0 radius {rad}"),
                _ => assert!((2.8..=3.2).contains(&rad), "class 1 radius {rad}"),
            }
        }
    }

    #[test]
    fn circles_reject_non_increasing_radii() {
        assert!(gen_circles(10, &[2.0, 1.0], 0.0, 1).is_err());
        assert!(gen_circles(10, &[], 0.0, 1).is_err());
    }

    #[test]
    fn two_point_knn_kernel_is_antidiagonal() {
        let ds = Dataset::new("pair", 2, 1, vec![0.0, 1.0], None).unwrap();
        let spec = build_knn_kernel(&ds, 1).unwrap();
        let m = spec.precomputed_matrix().unwrap();
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn collinear_triple_knn_matches_hand_built_adjacency() {
        // Points 0, 1, 2 at x = 0, 5, 10; each end picks the middle, the
        // middle picks one end (index tie -> lower). Union: middle has
        // degree 2, ends degree 1.
        let ds = Dataset::new("triple", 3, 1, vec![0.0, 5.0, 10.0], None).unwrap();
        let graph = build_knn_graph(&ds, 1).unwrap();
        assert_eq!(graph.degree(0), 1);
        assert_eq!(graph.degree(1), 2);
        assert_eq!(graph.degree(2), 1);
        let m = knn_kernel_from_graph(&graph);
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(2, 1), 0.5);
        assert_eq!(m.get(0, 2), 0.0);
        for i in 0..3 {
            assert_eq!(m.get(i, i), 0.0);
        }
    }

    #[test]
    fn two_point_heat_kernel_matches_cosh_sinh_closed_form() {
        // N = [[0,1],[1,0]] is involutory, so exp(-N) = cosh(1) I - sinh(1) N.
        let ds = Dataset::new("pair", 2, 1, vec![0.0, 1.0], None).unwrap();
        let spec = build_heat_kernel(&ds, 1, 1.0, HeatVariant::Adjacency).unwrap();
        let m = spec.precomputed_matrix().unwrap();
        let (c, s) = (1f64.cosh(), 1f64.sinh());
        assert!((m.get(0, 0) - c).abs() < 1e-12);
        assert!((m.get(1, 1) - c).abs() < 1e-12);
        assert!((m.get(0, 1) + s).abs() < 1e-12);
        assert!((m.get(1, 0) + s).abs() < 1e-12);
    }

    #[test]
    fn heat_kernel_rejects_bad_t() {
        let ds = Dataset::new("pair", 2, 1, vec![0.0, 1.0], None).unwrap();
        assert!(build_heat_kernel(&ds, 1, 0.0, HeatVariant::Adjacency).is_err());
        assert!(build_heat_kernel(&ds, 1, f64::INFINITY, HeatVariant::Adjacency).is_err());
    }

    #[cfg(feature = "oracle")]
    #[test]
    fn heat_kernel_matches_eigendecomposition_oracle() {
        use crate::oracle::jacobi_eigen;
        let ds = gen_blobs(10, 2, 2, 1.0, 5).unwrap();
        let graph = build_knn_graph(&ds, 2).unwrap();
        let n = ds.n();
        let t = 0.5;
        let mut neg_tn = SquareMatrix::zeros(n);
        for i in 0..n {
            for &j in graph.neighbors(i) {
                let nij =
                    1.0 / ((graph.degree(i) as f64) * (graph.degree(j as usize) as f64)).sqrt();
                neg_tn.set(i, j as usize, -t * nij);
            }
        }
        let expected = jacobi_eigen(&neg_tn).exp_reconstruct();
        let spec = build_heat_kernel(&ds, 2, t, HeatVariant::Adjacency).unwrap();
        let got = spec.precomputed_matrix().unwrap();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (got.get(i, j) - expected.get(i, j)).abs() < 1e-8,
                    "entry ({i},{j}): {} vs {}",
                    got.get(i, j),
                    expected.get(i, j)
                );
            }
        }
    }
}
