//! Dense symmetric linear algebra: eigendecomposition, SPD solves and PSD
//! checks. Heavy lifting is delegated to `faer`; everything else in the crate
//! works on `ndarray` matrices.

use faer::{Mat, Side};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Square matrix that is exactly symmetric.
///
/// Construction stores `(M + Mᵀ)/2`, so floating-point drift in the caller
/// never leaks into the symmetry invariant.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Array2<f64>);

impl SymMatrix {
    pub fn new(m: Array2<f64>) -> Result<Self> {
        let (r, c) = m.dim();
        if r != c {
            return Err(Error::InvalidInput(format!(
                "symmetric matrix must be square, got {r}x{c}"
            )));
        }
        if let Some(((i, j), v)) = m.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {v} at ({i}, {j})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without the finiteness scan. Callers guarantee finite input.
    pub(crate) fn symmetrize(mut m: Array2<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[[i, j]] + m[[j, i]]);
                m[[i, j]] = avg;
                m[[j, i]] = avg;
            }
        }
        SymMatrix(m)
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Array2::zeros((n, n)))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Array2::eye(n))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        SymMatrix(Array2::from_diag(&Array1::from(d.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    /// Graph Laplacian `Diag(W·1) − W` of this matrix read as edge weights.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = self.0.mapv(|v| -v);
        let degrees = self.0.sum_axis(Axis(1));
        for (i, d) in degrees.iter().enumerate() {
            l[[i, i]] += d;
        }
        SymMatrix(l)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        frobenius(&self.0.view())
    }
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl EigenPairs {
    /// Keeps only the first `k` pairs.
    pub fn truncate(self, k: usize) -> EigenPairs {
        let k = k.min(self.values.len());
        EigenPairs {
            values: self.values.slice(ndarray::s![..k]).to_owned(),
            vectors: self.vectors.slice(ndarray::s![.., ..k]).to_owned(),
        }
    }

    /// `V·diag(values)·Vᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }
}

pub(crate) fn frobenius(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn to_faer(m: &ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m.read(i, j))
}

/// Full symmetric eigendecomposition, ascending.
///
/// Equal eigenvalues keep the order the decomposition produced them in
/// (stable sort), which keeps downstream selections deterministic.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenPairs> {
    let n = m.dim();
    if n == 0 {
        return Ok(EigenPairs {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let evd = to_faer(&m.view()).selfadjoint_eigendecomposition(Side::Lower);
    let s = evd.s().column_vector();
    let raw: Vec<f64> = (0..n).map(|i| s.read(i)).collect();
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "eigendecomposition produced non-finite values".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let u = evd.u();
    let values = Array1::from_iter(order.iter().map(|&i| raw[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| u.read(r, order[c]));
    Ok(EigenPairs { values, vectors })
}

/// The `k` smallest eigenpairs.
pub fn lowest_eigenpairs(m: &SymMatrix, k: usize) -> Result<EigenPairs> {
    if k > m.dim() {
        return Err(Error::param(
            "k",
            format!("requested {k} eigenpairs of a {0}x{0} matrix", m.dim()),
        ));
    }
    Ok(sym_eig(m)?.truncate(k))
}

pub fn min_eigenvalue(m: &SymMatrix) -> Result<f64> {
    if m.dim() == 0 {
        return Err(Error::InvalidInput("empty matrix has no eigenvalues".into()));
    }
    let values = to_faer(&m.view()).selfadjoint_eigenvalues(Side::Lower);
    values
        .into_iter()
        .min_by(f64::total_cmp)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidInput("non-finite eigenvalue".into()))
}

/// Cholesky factor of an SPD matrix, reusable for many right-hand sides.
pub struct SpdFactor {
    chol: faer::linalg::solvers::Cholesky<f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: &SymMatrix) -> Result<Self> {
        let chol = to_faer(&a.view())
            .cholesky(Side::Lower)
            .map_err(|_| Error::Singular {
                pivot: first_failing_pivot(a),
            })?;
        Ok(SpdFactor { chol, n: a.dim() })
    }

    pub fn solve(&self, b: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        use faer::linalg::solvers::SpSolver;
        if b.nrows() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: b.nrows(),
            });
        }
        let x = self.chol.solve(to_faer(b).as_ref());
        Ok(from_faer(x.as_ref()))
    }

    /// Smallest Cholesky pivot `L_ii²`.
    pub fn min_pivot(&self) -> f64 {
        let l = self.chol.compute_l();
        (0..self.n).map(|i| l.read(i, i).powi(2)).fold(f64::INFINITY, f64::min)
    }

    /// `L⁻¹b` for the lower factor `L` of `a = LLᵀ`.
    pub fn solve_lower(&self, b: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if b.nrows() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: b.nrows(),
            });
        }
        let l = self.chol.compute_l();
        let mut x = to_faer(b);
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            l.as_ref(),
            x.as_mut(),
            faer::Parallelism::None,
        );
        Ok(from_faer(x.as_ref()))
    }

    pub fn inverse(&self) -> Array2<f64> {
        use faer::linalg::solvers::SolverCore;
        let inv = from_faer(self.chol.inverse().as_ref());
        SymMatrix::symmetrize(inv).into_inner()
    }
}

/// Index of the first non-positive pivot of an unblocked Cholesky sweep.
/// Only used to report failures, so clarity wins over speed.
fn first_failing_pivot(a: &SymMatrix) -> usize {
    let n = a.dim();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let d = a.get(j, j) - (0..j).map(|p| l[[j, p]] * l[[j, p]]).sum::<f64>();
        if !(d > 0.0) {
            return j;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            l[[i, j]] = (a.get(i, j) - (0..j).map(|p| l[[i, p]] * l[[j, p]]).sum::<f64>()) / d;
        }
    }
    // faer rejected a matrix that is positive definite to working precision
    n.saturating_sub(1)
}

/// Solves `a·x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &SymMatrix, b: &Array2<f64>) -> Result<Array2<f64>> {
    SpdFactor::new(a)?.solve(&b.view())
}
