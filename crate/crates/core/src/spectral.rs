//! Final clustering step and graph-component utilities.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bootstrap::{build_affinity, SelfRepMatrix};
use crate::data::LabelVector;
use crate::error::{Error, Result};
use crate::numerics::{lowest_eigenpairs, sym_eig, SymMatrix};

/// Threshold for counting Laplacian eigenvalues as zero.
pub const ZERO_EIG_TOL: f64 = 1e-6;

const KMEANS_RESTARTS: usize = 20;
const KMEANS_MAX_ITERS: usize = 300;

/// Clustering affinity `(Z + Zᵀ)/2`, negatives clamped, zero diagonal.
pub fn affinity_from_z(z: &SelfRepMatrix) -> SymMatrix {
    build_affinity(z)
}

/// Row-normalized bottom-`k` eigenvectors of `I − D^{-1/2} W D^{-1/2}`.
pub fn spectral_embedding(w: &SymMatrix, k: usize) -> Result<Array2<f64>> {
    let n = w.dim();
    let wa = w.as_array();
    if wa.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("affinity must be nonnegative".into()));
    }
    let inv_sqrt: Array1<f64> = wa
        .sum_axis(Axis(1))
        .mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    let lap = Array2::from_shape_fn((n, n), |(i, j)| {
        let off = -wa[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 + off
        } else {
            off
        }
    });
    let mut u = lowest_eigenpairs(&SymMatrix::symmetrize(lap), k)?.vectors;
    for mut row in u.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    // Isolated points carry no graph information.
    for (i, &s) in inv_sqrt.iter().enumerate() {
        if s == 0.0 {
            u.row_mut(i).fill(0.0);
        }
    }
    Ok(u)
}

/// Normalized spectral clustering of `w` into `k` groups.
///
/// Labels are renumbered in order of first appearance so equal partitions
/// produce equal vectors.
pub fn spectral_cluster(w: &SymMatrix, k: usize, seed: u64) -> Result<LabelVector> {
    let n = w.dim();
    if k == 0 || k > n {
        return Err(Error::param("k", format!("must lie in 1..={n}, got {k}")));
    }
    if k == 1 {
        return LabelVector::new(vec![0; n], 1);
    }
    let emb = spectral_embedding(w, k)?;
    let labels = kmeans(&emb, k, seed).labels;
    LabelVector::new(canonical_labels(&labels), k)
}

/// Renames labels to `0, 1, ...` by first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Farthest-first seeding from a given first center. Ties pick the lowest index.
fn farthest_first(points: &Array2<f64>, k: usize, first: usize) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    centers.row_mut(0).assign(&points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let (far, _) = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        centers.row_mut(c).assign(&points.row(far));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(far)));
        }
    }
    centers
}

fn assign(points: &Array2<f64>, centers: &Array2<f64>, labels: &mut [usize]) -> (bool, Vec<f64>) {
    let mut changed = false;
    let mut dists = vec![0.0; points.nrows()];
    for (i, p) in points.rows().into_iter().enumerate() {
        let (best, d) = centers
            .rows()
            .into_iter()
            .enumerate()
            .map(|(c, ctr)| (c, sq_dist(p, ctr)))
            .fold((0, f64::INFINITY), |b, (c, d)| if d < b.1 { (c, d) } else { b });
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        dists[i] = d;
    }
    (changed, dists)
}

fn lloyd(points: &Array2<f64>, mut centers: Array2<f64>) -> KMeansResult {
    let (n, k) = (points.nrows(), centers.nrows());
    let mut labels = vec![usize::MAX; n];
    let mut dists = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let (changed, d) = assign(points, &centers, &mut labels);
        dists = d;
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &points.row(i));
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // Reseed from the point currently worst served.
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
                centers.row_mut(c).assign(&points.row(far));
                dists[far] = 0.0;
            }
        }
    }
    let inertia = dists.iter().sum();
    KMeansResult {
        labels,
        centers,
        inertia,
    }
}

/// k-means on the rows of `points` with farthest-first seeding.
///
/// The first restart starts from the point farthest from the mean; the
/// others from a seeded random point. The lowest inertia wins, earlier
/// restarts on ties.
pub fn kmeans(points: &Array2<f64>, k: usize, seed: u64) -> KMeansResult {
    let n = points.nrows();
    let mean = points.mean_axis(Axis(0)).expect("at least one point");
    let far_from_mean = (0..n)
        .map(|i| (i, sq_dist(points.row(i), mean.view())))
        .fold((0, f64::NEG_INFINITY), |b, (i, d)| if d > b.1 { (i, d) } else { b })
        .0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeansResult> = None;
    for r in 0..KMEANS_RESTARTS {
        let first = if r == 0 { far_from_mean } else { rng.random_range(0..n) };
        let run = lloyd(points, farthest_first(points, k, first));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn sets(&self) -> usize {
        self.sets
    }
}

/// Component id per node (first-appearance order) for edges `w_ij ≥ threshold`.
pub fn component_labels(w: &SymMatrix, threshold: f64) -> (usize, Vec<usize>) {
    let n = w.dim();
    let a = w.as_array();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if a[[i, j]] >= threshold {
                uf.union(i, j);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
    (uf.sets(), canonical_labels(&roots))
}

/// Number of connected components of the graph with edges `w_ij ≥ threshold`.
pub fn count_components(w: &SymMatrix, threshold: f64) -> usize {
    component_labels(w, threshold).0
}

/// Keeps entries `≥ threshold` (off the diagonal) and zeroes the rest.
pub fn threshold_graph(w: &SymMatrix, threshold: f64) -> SymMatrix {
    let n = w.dim();
    let a = w.as_array();
    SymMatrix::symmetrize(Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && a[[i, j]] >= threshold {
            a[[i, j]]
        } else {
            0.0
        }
    }))
}

/// Count of eigenvalues of `Diag(W1) − W` below `tol`.
pub fn laplacian_null_multiplicity(w: &SymMatrix, tol: f64) -> Result<usize> {
    Ok(sym_eig(&w.laplacian())?.values.iter().filter(|&&v| v < tol).count())
}
