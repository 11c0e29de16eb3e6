//! Alternating minimization over `(Z, S, C)` for the block-diagonal
//! regularized kernel self-representation objective
//!
//! ```text
//! ½Tr(K + ZᵀKZ) − α·Tr(KZ) + (β/2)‖Z − C‖² + γ⟨Diag(C1) − C, S⟩
//! ```

use log::debug;
use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::bootstrap::SelfRepMatrix;
use crate::error::{Error, Result};
use crate::kernel::KernelMatrix;
use crate::numerics::{lowest_eigenpairs, solve_spd, SpdFactor, SymMatrix};
use crate::spectral::component_labels;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 2.0,
            beta: 10.0,
            gamma: 1.0,
            k: 2,
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("tol", self.tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        check_k(self.k, n)
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::param("k", format!("must lie in 1..{n}, got {k}")));
    }
    Ok(())
}

/// One row of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub z_delta: f64,
    pub c_delta: f64,
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub z: SelfRepMatrix,
    pub c: SelfRepMatrix,
    pub s: SymMatrix,
    pub history: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    /// Iterations whose `S` update needed an eigendecomposition.
    pub eigen_updates: usize,
}

impl SolverState {
    pub fn objective_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.objective).collect()
    }

    /// `C` as a symmetric matrix (it is symmetric by construction).
    pub fn c_sym(&self) -> SymMatrix {
        SymMatrix::symmetrize(self.c.as_array().clone())
    }
}

/// `⟨Diag(C1) − C, S⟩` without forming the Laplacian.
pub fn laplacian_inner(c: &Array2<f64>, s: &Array2<f64>) -> f64 {
    let n = c.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        let (cr, sr) = (c.row(i), s.row(i));
        let deg: f64 = cr.sum();
        let cross: f64 = cr.iter().zip(sr.iter()).map(|(a, b)| a * b).sum();
        acc += deg * s[[i, i]] - cross;
    }
    acc
}

/// Sum of the `k` smallest eigenvalues of `Diag(C1) − C`.
pub fn block_diag_norm(c: &SymMatrix, k: usize) -> Result<f64> {
    check_k(k, c.dim())?;
    Ok(lowest_eigenpairs(&c.laplacian(), k)?.values.sum())
}

/// `(K + βI)⁻¹(αK + βC)`.
pub fn update_z(kernel: &KernelMatrix, c: &SelfRepMatrix, alpha: f64, beta: f64) -> Result<SelfRepMatrix> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("must be > 0, got {beta}")));
    }
    let k = kernel.matrix().as_array();
    let n = k.nrows();
    if c.dim() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: c.dim(),
        });
    }
    let lhs = SymMatrix::symmetrize(k + &(Array2::<f64>::eye(n) * beta));
    let rhs = k * alpha + c.as_array() * beta;
    Ok(SelfRepMatrix::from_array_unchecked(solve_spd(&lhs, &rhs)?))
}

/// `UUᵀ` for the eigenvectors of the `k` smallest eigenvalues of the Laplacian of `c`.
pub fn update_s(c: &SelfRepMatrix, k: usize) -> Result<SymMatrix> {
    check_k(k, c.dim())?;
    let csym = SymMatrix::new(c.as_array().clone())?;
    laplacian_projector(&csym, k)
}

fn laplacian_projector(c: &SymMatrix, k: usize) -> Result<SymMatrix> {
    let u = lowest_eigenpairs(&c.laplacian(), k)?.vectors;
    Ok(SymMatrix::symmetrize(u.dot(&u.t())))
}

/// Projector onto the span of normalized component indicators. When `C`
/// has exactly `k` components this is the unique bottom-`k` eigenprojector
/// of its Laplacian (the null space, separated from the rest by a gap).
fn indicator_projector(labels: &[usize], k: usize) -> SymMatrix {
    let n = labels.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    SymMatrix::symmetrize(Array2::from_shape_fn((n, n), |(i, j)| {
        if labels[i] == labels[j] {
            1.0 / sizes[labels[i]] as f64
        } else {
            0.0
        }
    }))
}

/// Projection of `Z − (γ/β)(diag(S)1ᵀ − S)` onto symmetric nonnegative
/// matrices with zero diagonal.
pub fn update_c(z: &SelfRepMatrix, s: &SymMatrix, gamma: f64, beta: f64) -> Result<SelfRepMatrix> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("must be > 0, got {beta}")));
    }
    let (za, sa) = (z.as_array(), s.as_array());
    let n = za.nrows();
    if sa.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: sa.nrows(),
        });
    }
    let r = gamma / beta;
    let mut c = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let zs = 0.5 * (za[[i, j]] + za[[j, i]]);
            let shift = 0.5 * (sa[[i, i]] + sa[[j, j]]) - sa[[i, j]];
            let v = (zs - r * shift).max(0.0);
            c[[i, j]] = v;
            c[[j, i]] = v;
        }
    }
    Ok(SelfRepMatrix::from_array_unchecked(c))
}

/// Objective evaluated directly (one matrix product).
pub fn objective(
    kernel: &KernelMatrix,
    z: &SelfRepMatrix,
    c: &SelfRepMatrix,
    s: &SymMatrix,
    cfg: &SolverConfig,
) -> f64 {
    let k = kernel.matrix().as_array();
    let kz = k.dot(z.as_array());
    objective_from_kz(k, z.as_array(), &kz, c.as_array(), s.as_array(), cfg)
}

fn objective_from_kz(
    k: &Array2<f64>,
    z: &Array2<f64>,
    kz: &Array2<f64>,
    c: &Array2<f64>,
    s: &Array2<f64>,
    cfg: &SolverConfig,
) -> f64 {
    let tr_k = k.diag().sum();
    let zkz: f64 = Zip::from(z).and(kz).fold(0.0, |a, &zv, &kv| a + zv * kv);
    let tr_kz = kz.diag().sum();
    let fit: f64 = Zip::from(z).and(c).fold(0.0, |a, &zv, &cv| a + (zv - cv) * (zv - cv));
    0.5 * (tr_k + zkz) - cfg.alpha * tr_kz + 0.5 * cfg.beta * fit + cfg.gamma * laplacian_inner(c, s)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0f64, |m, &x, &y| m.max((x - y).abs()))
}

/// Runs the alternating updates `Z → S → C` from `Z = C = S = 0`.
///
/// `(K + βI)⁻¹` is factored once. Each iteration then costs one product
/// with `C`, done block by block once `C` splits into components, plus an
/// eigendecomposition (again per block) while `C` does not have exactly `k`
/// components.
///
/// The first `S` update sees `C = 0`, where every feasible `S` is optimal;
/// the tie is broken with the bottom-`k` eigenprojector of the Laplacian
/// of `[(Z + Zᵀ)/2]₊`.
pub fn solve_dklm(kernel: &KernelMatrix, cfg: &SolverConfig) -> Result<SolverState> {
    let n = kernel.dim();
    cfg.validate(n)?;
    let k = kernel.matrix().as_array();

    let shifted = SymMatrix::symmetrize(k + &(Array2::<f64>::eye(n) * cfg.beta));
    let inv = SpdFactor::new(&shifted)?.inverse();
    // (K + βI)⁻¹αK = α(I − β(K + βI)⁻¹)
    let mut base = &inv * (-cfg.alpha * cfg.beta);
    base.diag_mut().mapv_inplace(|v| v + cfg.alpha);

    let mut z = Array2::<f64>::zeros((n, n));
    let mut c = Array2::<f64>::zeros((n, n));
    let mut s = SymMatrix::zeros(n);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut eigen_updates = 0;

    for it in 1..=cfg.max_iters {
        let c_sym = SymMatrix::symmetrize(c.clone());
        let (count, labels) = component_labels(&c_sym, f64::MIN_POSITIVE);
        let mut z_new = block_diag_product(&inv, &c, &labels, count);
        z_new.zip_mut_with(&base, |v, &b| *v = cfg.beta * *v + b);

        let (s_new, used_eig) = if count == n {
            // C = 0: seed the tie-break from the new Z.
            let seed = update_c(&SelfRepMatrix::from_array_unchecked(z_new.clone()), &SymMatrix::zeros(n), 1.0, 1.0)?;
            let seed = SymMatrix::symmetrize(seed.into_inner());
            let (count, labels) = component_labels(&seed, f64::MIN_POSITIVE);
            solve_s(&seed, &labels, count, cfg.k)?
        } else {
            solve_s(&c_sym, &labels, count, cfg.k)?
        };
        eigen_updates += used_eig as usize;

        let z_rep = SelfRepMatrix::from_array_unchecked(z_new);
        let c_new = update_c(&z_rep, &s_new, cfg.gamma, cfg.beta)?.into_inner();
        let z_new = z_rep.into_inner();

        // K·Z = αK + βC_prev − βZ from the Z update, so no second product is needed.
        let mut kz = k * cfg.alpha;
        Zip::from(&mut kz).and(&c).and(&z_new).for_each(|v, &cp, &zv| *v += cfg.beta * (cp - zv));
        let obj = objective_from_kz(k, &z_new, &kz, &c_new, s_new.as_array(), cfg);

        let z_delta = max_abs_diff(&z_new, &z);
        let c_delta = max_abs_diff(&c_new, &c);
        history.push(IterationRecord {
            iteration: it,
            objective: obj,
            z_delta,
            c_delta,
        });
        debug!("iter {it}: objective {obj:.10e} dz {z_delta:.3e} dc {c_delta:.3e}");
        z = z_new;
        c = c_new;
        s = s_new;
        iterations = it;
        if z_delta.max(c_delta) < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(SolverState {
        z: SelfRepMatrix::from_array_unchecked(z),
        c: SelfRepMatrix::from_array_unchecked(c),
        s,
        history,
        iterations,
        converged,
        eigen_updates,
    })
}

/// Node lists per component, in label order.
fn groups_of(labels: &[usize], count: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// `a·c` where `c` is block diagonal with the given components; costs
/// `N·Σ|block|²` instead of `N³`.
fn block_diag_product(a: &Array2<f64>, c: &Array2<f64>, labels: &[usize], count: usize) -> Array2<f64> {
    if count <= 1 {
        return a.dot(c);
    }
    let mut out = Array2::<f64>::zeros(a.raw_dim());
    for g in groups_of(labels, count).iter().filter(|g| g.len() > 1) {
        let block = c.select(Axis(0), g).select(Axis(1), g);
        let prod = a.select(Axis(1), g).dot(&block);
        for (t, &j) in g.iter().enumerate() {
            out.column_mut(j).assign(&prod.column(t));
        }
    }
    out
}

/// Bottom-`k` Laplacian projector of `c` given its components; the flag
/// reports whether an eigendecomposition was needed. With several
/// components the Laplacian is block diagonal, so the spectra of the blocks
/// are merged instead of decomposing the whole matrix. Tied eigenvalues
/// prefer larger, then heavier blocks.
fn solve_s(c: &SymMatrix, labels: &[usize], count: usize, k: usize) -> Result<(SymMatrix, bool)> {
    if count == k {
        return Ok((indicator_projector(labels, k), false));
    }
    if count == 1 {
        return Ok((laplacian_projector(c, k)?, true));
    }
    let groups = groups_of(labels, count);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    let mut bases = Vec::with_capacity(count);
    for (gi, g) in groups.iter().enumerate() {
        let sub = SymMatrix::symmetrize(c.as_array().select(Axis(0), g).select(Axis(1), g));
        let pairs = lowest_eigenpairs(&sub.laplacian(), k.min(g.len()))?;
        candidates.extend(pairs.values.iter().enumerate().map(|(t, &v)| (v, gi, t)));
        bases.push(pairs.vectors);
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    // Null eigenvalues of different blocks are equal up to rounding; order
    // numerically tied runs by block size, then block weight, so the choice
    // does not depend on the point order.
    let scale = c.as_array().rows().into_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let eps = 1e-9 * scale;
    let weight: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| g.iter().map(|&j| c.as_array()[[i, j]]).sum::<f64>()).sum())
        .collect();
    let mut start = 0;
    while start < candidates.len() {
        let mut end = start + 1;
        while end < candidates.len() && candidates[end].0 - candidates[start].0 <= eps {
            end += 1;
        }
        candidates[start..end].sort_by(|a, b| {
            groups[b.1]
                .len()
                .cmp(&groups[a.1].len())
                .then(weight[b.1].total_cmp(&weight[a.1]))
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        start = end;
    }
    let mut u = Array2::<f64>::zeros((labels.len(), k));
    for (col, &(_, gi, t)) in candidates.iter().take(k).enumerate() {
        for (r, &i) in groups[gi].iter().enumerate() {
            u[[i, col]] = bases[gi][[r, t]];
        }
    }
    Ok((SymMatrix::symmetrize(u.dot(&u.t())), true))
}
