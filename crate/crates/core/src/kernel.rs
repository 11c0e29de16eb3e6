//! Data-driven kernel built from the bootstrap affinity, its validity
//! checks, and the Nyström approximation used for larger inputs.

use log::warn;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{build_affinity, normalize_degree, NormalizedAffinity, SelfRepMatrix, DEFAULT_DEGREE_EPS};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::numerics::{min_eigenvalue, SpdFactor, SymMatrix};
use crate::spectral::spectral_cluster;

/// Default diagonal-dominance margin.
pub const DEFAULT_XI: f64 = 0.1;

const PSD_TOL: f64 = -1e-8;
const TRIANGLE_SLACK: f64 = 1e-12;

/// Symmetric similarity matrix fed to the solver.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    k: SymMatrix,
    xi: Option<f64>,
}

impl KernelMatrix {
    /// Wraps an arbitrary symmetric matrix. No validity is implied; use
    /// [`validate_kernel`] to check.
    pub fn new(k: SymMatrix) -> Self {
        KernelMatrix { k, xi: None }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.k
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    /// Margin used at construction, when built by [`learn_kernel`].
    pub fn xi(&self) -> Option<f64> {
        self.xi
    }

    pub fn permute(&self, perm: &[usize]) -> KernelMatrix {
        KernelMatrix {
            k: SymMatrix::symmetrize(crate::bootstrap::permute_square(self.k.as_array(), perm)),
            xi: self.xi,
        }
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi < 1.0 {
        Ok(())
    } else {
        Err(Error::param("xi", format!("must lie in (0, 1), got {xi}")))
    }
}

#[inline]
fn off_diag_entry(g: f64, max_g: f64) -> f64 {
    (g - 2.0 * max_g).exp()
}

/// Off-diagonals `exp(G_ij − 2·max G)`, diagonal the row sum of those plus `xi`.
pub fn learn_kernel(g: &NormalizedAffinity, xi: f64) -> Result<KernelMatrix> {
    check_xi(xi)?;
    let n = g.dim();
    let max_g = g.max_entry();
    let ga = g.matrix().as_array();
    let mut k = ga.mapv(|v| off_diag_entry(v, max_g));
    for i in 0..n {
        k[[i, i]] = 0.0;
        let row: f64 = k.row(i).sum();
        k[[i, i]] = row + xi;
    }
    Ok(KernelMatrix {
        k: SymMatrix::symmetrize(k),
        xi: Some(xi),
    })
}

/// Outcome of the three kernel-validity conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub nonnegative: bool,
    pub symmetric: bool,
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// `min_i (K_ii − Σ_{j≠i} |K_ij|)`.
    pub dominance_margin: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.nonnegative && self.symmetric && self.psd
    }
}

pub fn validate_kernel(k: &KernelMatrix) -> Result<ValidationReport> {
    let a = k.matrix().as_array();
    let n = a.nrows();
    let nonnegative = a.iter().all(|&v| v >= 0.0);
    let symmetric = (0..n).all(|i| (0..i).all(|j| a[[i, j]] == a[[j, i]]));
    let min_eig = min_eigenvalue(k.matrix())?;
    let dominance_margin = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[[i, j]].abs()).sum();
            a[[i, i]] - off
        })
        .fold(f64::INFINITY, f64::min);
    Ok(ValidationReport {
        nonnegative,
        symmetric,
        psd: min_eig >= PSD_TOL,
        min_eigenvalue: min_eig,
        dominance_margin,
    })
}

/// All ordered triples `(i, l, j)` of distinct indices with
/// `K_ij < K_il·K_lj − 1e-12`.
pub fn check_mult_triangle(k: &KernelMatrix) -> Vec<(usize, usize, usize)> {
    let a = k.matrix().as_array();
    let n = a.nrows();
    let mut out = Vec::new();
    for i in 0..n {
        for l in 0..n {
            if l == i {
                continue;
            }
            for j in 0..n {
                if j == i || j == l {
                    continue;
                }
                if a[[i, j]] < a[[i, l]] * a[[l, j]] - TRIANGLE_SLACK {
                    out.push((i, l, j));
                }
            }
        }
    }
    out
}

/// How the diagonal shift of the Nyström reconstruction is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RhoPolicy {
    /// `max(0, −λ_min) + 1e-8` of the low-rank part.
    Adaptive,
    Fixed(f64),
}

impl Default for RhoPolicy {
    fn default() -> Self {
        RhoPolicy::Adaptive
    }
}

/// Sampled kernel blocks.
#[derive(Clone, Debug)]
pub struct NystromKernel {
    /// N×Q columns of the learned kernel at `sample_indices`.
    pub k_nq: Array2<f64>,
    /// Q×Q rows of `k_nq` at `sample_indices`.
    pub k_qq: Array2<f64>,
    pub rho: RhoPolicy,
    pub sample_indices: Vec<usize>,
}

/// Picks `q` landmarks: the bootstrap affinity is split into `groups` by
/// spectral clustering, each group gets a share proportional to its size
/// (largest remainder), and within a group points closest to the group mean
/// go first.
pub fn select_landmarks(
    x: &DataMatrix,
    w_boot: &SymMatrix,
    q: usize,
    groups: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = x.points();
    if q < 2 || q > n {
        return Err(Error::param("q", format!("must lie in 2..={n}, got {q}")));
    }
    if w_boot.dim() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: w_boot.dim(),
        });
    }
    if q == n {
        return Ok((0..n).collect());
    }
    let groups = groups.clamp(1, n);
    let labels = spectral_cluster(w_boot, groups, seed)?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for (i, &l) in labels.labels().iter().enumerate() {
        members[l].push(i);
    }

    let mut quota: Vec<usize> = members.iter().map(|m| q * m.len() / n).collect();
    let mut rest: Vec<(usize, usize)> = members
        .iter()
        .enumerate()
        .map(|(g, m)| ((q * m.len()) % n, g))
        .collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut missing = q - quota.iter().sum::<usize>();
    for &(_, g) in &rest {
        if missing == 0 {
            break;
        }
        if quota[g] < members[g].len() {
            quota[g] += 1;
            missing -= 1;
        }
    }

    let xa = x.as_array();
    let mut chosen = Vec::with_capacity(q);
    for (g, m) in members.iter().enumerate() {
        if m.is_empty() {
            continue;
        }
        let centroid = m
            .iter()
            .fold(ndarray::Array1::<f64>::zeros(x.dims()), |acc, &i| acc + &xa.column(i))
            / m.len() as f64;
        let mut ranked: Vec<(f64, usize)> = m
            .iter()
            .map(|&i| {
                let d = &xa.column(i) - &centroid;
                (d.dot(&d), i)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        chosen.extend(ranked.into_iter().take(quota[g]).map(|(_, i)| i));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Samples `q` landmarks guided by the bootstrap and extracts the kernel
/// blocks they span. `groups` is the number of preliminary clusters.
pub fn nystrom_approx(
    x: &DataMatrix,
    z_boot: &SelfRepMatrix,
    q: usize,
    xi: f64,
    rho_policy: RhoPolicy,
    groups: usize,
    seed: u64,
) -> Result<NystromKernel> {
    check_xi(xi)?;
    if z_boot.dim() != x.points() {
        return Err(Error::LengthMismatch {
            expected: x.points(),
            actual: z_boot.dim(),
        });
    }
    let w = build_affinity(z_boot);
    let sample_indices = select_landmarks(x, &w, q, groups, seed)?;
    let g = normalize_degree(&w, DEFAULT_DEGREE_EPS)?;
    Ok(kernel_columns(&g, xi, sample_indices, rho_policy))
}

/// Kernel blocks for given landmarks, evaluated without forming the full kernel.
pub fn kernel_columns(
    g: &NormalizedAffinity,
    xi: f64,
    sample_indices: Vec<usize>,
    rho: RhoPolicy,
) -> NystromKernel {
    let n = g.dim();
    let max_g = g.max_entry();
    let ga = g.matrix().as_array();
    let diag: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&q| q != i)
                .map(|q| off_diag_entry(ga[[i, q]], max_g))
                .sum::<f64>()
                + xi
        })
        .collect();
    let k_nq = Array2::from_shape_fn((n, sample_indices.len()), |(i, c)| {
        let j = sample_indices[c];
        if i == j {
            diag[i]
        } else {
            off_diag_entry(ga[[i, j]], max_g)
        }
    });
    let k_qq = k_nq.select(Axis(0), &sample_indices);
    NystromKernel {
        k_nq,
        k_qq,
        rho,
        sample_indices,
    }
}

/// Dense `K̃K̂⁻¹K̃ᵀ + ρI`, plus the shift actually applied.
pub fn assemble_nystrom_with_rho(nk: &NystromKernel) -> Result<(KernelMatrix, f64)> {
    let q = nk.k_qq.nrows();
    if nk.k_qq.ncols() != q || nk.k_nq.ncols() != q || nk.sample_indices.len() != q {
        return Err(Error::InvalidInput("inconsistent Nyström block shapes".into()));
    }
    let mut k_qq = SymMatrix::new(nk.k_qq.clone())?;
    let trace: f64 = k_qq.as_array().diag().sum();
    let floor = 1e-10 * trace.abs();
    let factor = match SpdFactor::new(&k_qq) {
        Ok(f) if f.min_pivot() >= floor => f,
        _ => {
            warn!("sampled kernel block is near singular, adding {floor:e} to its diagonal");
            let mut a = k_qq.into_inner();
            a.diag_mut().mapv_inplace(|v| v + floor);
            k_qq = SymMatrix::symmetrize(a);
            SpdFactor::new(&k_qq)?
        }
    };
    // K̃K̂⁻¹K̃ᵀ = BᵀB with B = L⁻¹K̃ᵀ keeps the product symmetric PSD.
    let b = factor.solve_lower(&nk.k_nq.t())?;
    let low = SymMatrix::symmetrize(b.t().dot(&b));
    let rho = match nk.rho {
        RhoPolicy::Adaptive => (-min_eigenvalue(&low)?).max(0.0) + 1e-8,
        RhoPolicy::Fixed(r) => {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::param("rho", format!("must be >= 0, got {r}")));
            }
            r
        }
    };
    let mut k = low.into_inner();
    k.diag_mut().mapv_inplace(|v| v + rho);
    Ok((KernelMatrix::new(SymMatrix::symmetrize(k)), rho))
}

pub fn assemble_nystrom(nk: &NystromKernel) -> Result<KernelMatrix> {
    assemble_nystrom_with_rho(nk).map(|(k, _)| k)
}
