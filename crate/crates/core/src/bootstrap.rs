//! Linear-space self-representation used to seed kernel learning.
//!
//! A bootstrap turns the raw points into a nonnegative coefficient matrix
//! `Ẑ` (column `i` expresses point `i` through the others), its affinity
//! `Ŵ = (Ẑ + Ẑᵀ)/2`, and the degree-normalized `G = D^{-1/2} Ŵ D^{-1/2}`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, SymMatrix};

/// Default guard added to degrees before normalization.
pub const DEFAULT_DEGREE_EPS: f64 = 1e-12;

/// N×N self-representation coefficients.
///
/// Bootstrap outputs additionally have a zero diagonal and nonnegative
/// entries; solver iterates only guarantee finiteness.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfRepMatrix(Array2<f64>);

impl SelfRepMatrix {
    pub fn new(z: Array2<f64>) -> Result<Self> {
        if z.nrows() != z.ncols() {
            return Err(Error::InvalidInput(format!(
                "self-representation must be square, got {}x{}",
                z.nrows(),
                z.ncols()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "self-representation has non-finite entries".into(),
            ));
        }
        Ok(SelfRepMatrix(z))
    }

    pub(crate) fn from_array_unchecked(z: Array2<f64>) -> Self {
        SelfRepMatrix(z)
    }

    pub fn zeros(n: usize) -> Self {
        SelfRepMatrix(Array2::zeros((n, n)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// `PᵀZP` for the permutation that maps new index `j` to old `perm[j]`.
    pub fn permute(&self, perm: &[usize]) -> SelfRepMatrix {
        SelfRepMatrix(permute_square(&self.0, perm))
    }
}

pub(crate) fn permute_square(m: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((perm.len(), perm.len()), |(i, j)| m[[perm[i], perm[j]]])
}

/// Degree-normalized bootstrap affinity `G` with its cached maximum.
#[derive(Clone, Debug)]
pub struct NormalizedAffinity {
    g: SymMatrix,
    max_entry: f64,
}

impl NormalizedAffinity {
    /// Wraps an already-normalized matrix (used for hand-built fixtures).
    pub fn new(g: SymMatrix) -> Result<Self> {
        let n = g.dim();
        if (0..n).any(|i| g.get(i, i) != 0.0) {
            return Err(Error::InvalidInput(
                "normalized affinity must have a zero diagonal".into(),
            ));
        }
        if g.as_array().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "normalized affinity must be nonnegative".into(),
            ));
        }
        let max_entry = g.as_array().iter().copied().fold(0.0, f64::max);
        Ok(NormalizedAffinity { g, max_entry })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.g
    }

    pub fn max_entry(&self) -> f64 {
        self.max_entry
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }
}

/// Produces a linear-space self-representation of the data.
pub trait Bootstrap {
    fn self_representation(&self, x: &DataMatrix) -> Result<SelfRepMatrix>;
}

/// Bootstrap selection, serializable for pipeline configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BootstrapKind {
    /// Global least-squares representation over all points.
    Lsr { gamma: f64 },
    /// Least squares restricted to each point's nearest neighbours with
    /// coefficients summing to one.
    LocalLsr { gamma: f64, neighbors: usize },
}

impl Default for BootstrapKind {
    fn default() -> Self {
        BootstrapKind::Lsr { gamma: 1.0 }
    }
}

impl Bootstrap for BootstrapKind {
    fn self_representation(&self, x: &DataMatrix) -> Result<SelfRepMatrix> {
        match *self {
            BootstrapKind::Lsr { gamma } => lsr_selfrep(x, gamma),
            BootstrapKind::LocalLsr { gamma, neighbors } => local_lsr_selfrep(x, gamma, neighbors),
        }
    }
}

fn project_bootstrap(mut z: Array2<f64>) -> SelfRepMatrix {
    z.diag_mut().fill(0.0);
    z.mapv_inplace(|v| v.max(0.0));
    SelfRepMatrix(z)
}

/// Closed-form least-squares self-representation
/// `Z = (XᵀX + γI)⁻¹XᵀX`, then diagonal zeroed and negatives clamped.
pub fn lsr_selfrep(x: &DataMatrix, gamma: f64) -> Result<SelfRepMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma_boot", format!("must be > 0, got {gamma}")));
    }
    let n = x.points();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    let gram = x.as_array().t().dot(x.as_array());
    let lhs = SymMatrix::new(&gram + &(Array2::<f64>::eye(n) * gamma))?;
    let z = solve_spd(&lhs, &gram)?;
    Ok(project_bootstrap(z))
}

/// Indices of the `k` nearest other points to each point, ties broken by
/// lower index.
pub fn nearest_neighbors(x: &DataMatrix, k: usize) -> Vec<Vec<usize>> {
    let n = x.points();
    let sq_norms: Array1<f64> = x.as_array().map_axis(Axis(0), |c| c.dot(&c));
    let gram = x.as_array().t().dot(x.as_array());
    (0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((sq_norms[i] + sq_norms[j] - 2.0 * gram[[i, j]]).max(0.0), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.truncate(k);
            others.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Least-squares self-representation supported on each point's `neighbors`
/// nearest points, with the affine constraint `1ᵀz = 1` on every column.
///
/// Column `i` solves `min ‖xᵢ − X_N z‖² + γ·tr(YᵀY)‖z‖²` subject to
/// `1ᵀz = 1`, where `Y = X_N − xᵢ1ᵀ`; the regularizer is relative to the
/// local scatter so `gamma` is scale free. Negatives are clamped afterwards.
pub fn local_lsr_selfrep(x: &DataMatrix, gamma: f64, neighbors: usize) -> Result<SelfRepMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param("gamma_boot", format!("must be > 0, got {gamma}")));
    }
    let n = x.points();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 points, got {n}")));
    }
    if neighbors == 0 || neighbors >= n {
        return Err(Error::param(
            "neighbors",
            format!("must be in 1..{n}, got {neighbors}"),
        ));
    }
    let knn = nearest_neighbors(x, neighbors);
    let mut z = Array2::<f64>::zeros((n, n));
    for (i, nb) in knn.iter().enumerate() {
        let xi = x.point(i);
        let y = Array2::from_shape_fn((x.dims(), nb.len()), |(d, c)| x.as_array()[[d, nb[c]]] - xi[d]);
        let local = y.t().dot(&y);
        let trace = local.diag().sum();
        // Coincident neighbourhoods have zero scatter; fall back to an
        // absolute ridge so the weights come out uniform.
        let ridge = if trace > 0.0 { gamma * trace } else { gamma };
        let lhs = SymMatrix::new(&local + &(Array2::<f64>::eye(nb.len()) * ridge))?;
        let w = solve_spd(&lhs, &Array2::ones((nb.len(), 1)))?;
        let total: f64 = w.sum();
        for (c, &j) in nb.iter().enumerate() {
            z[[j, i]] = w[[c, 0]] / total;
        }
    }
    Ok(project_bootstrap(z))
}

/// Symmetric nonnegative affinity `(Z + Zᵀ)/2` with zero diagonal.
pub fn build_affinity(z: &SelfRepMatrix) -> SymMatrix {
    let a = z.as_array();
    let n = a.nrows();
    let w = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            (0.5 * (a[[i, j]] + a[[j, i]])).max(0.0)
        }
    });
    SymMatrix::symmetrize(w)
}

/// `G_ij = W_ij / sqrt((d_i + eps)(d_j + eps))` with `d` the row sums of `W`.
pub fn normalize_degree(w: &SymMatrix, eps: f64) -> Result<NormalizedAffinity> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::param("eps", format!("must be >= 0, got {eps}")));
    }
    let wa = w.as_array();
    if wa.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput("affinity must be nonnegative".into()));
    }
    let scale: Array1<f64> = wa.sum_axis(Axis(1)).mapv(|d| {
        let s = (d + eps).sqrt();
        if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    });
    let n = w.dim();
    let g = Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            0.0
        } else {
            wa[[i, j]] * scale[i] * scale[j]
        }
    });
    NormalizedAffinity::new(SymMatrix::symmetrize(g))
}
