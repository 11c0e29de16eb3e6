use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// D×N point collection; each column is one point.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "data matrix must be non-empty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if let Some(((d, n), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {v} in dimension {d} of point {n}"
            )));
        }
        Ok(DataMatrix(x))
    }

    /// Builds from row-per-point storage (N×D), the usual interchange layout.
    pub fn from_rows(rows: Array2<f64>) -> Result<Self> {
        Self::new(rows.reversed_axes().as_standard_layout().into_owned())
    }

    pub fn dims(&self) -> usize {
        self.0.nrows()
    }

    pub fn points(&self) -> usize {
        self.0.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.column(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    /// Reorders columns: the result's point `j` is this matrix's point `perm[j]`.
    pub fn permute_points(&self, perm: &[usize]) -> DataMatrix {
        let x = Array2::from_shape_fn((self.dims(), perm.len()), |(d, j)| self.0[[d, perm[j]]]);
        DataMatrix(x)
    }
}

/// Cluster assignment per point, ids in `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("label vector is empty".into()));
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::InvalidInput(format!(
                "label {l} at position {i} is outside 0..{k}"
            )));
        }
        Ok(LabelVector { labels, k })
    }

    /// Uses `max + 1` as the cluster count.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn permute(&self, perm: &[usize]) -> LabelVector {
        LabelVector {
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
            k: self.k,
        }
    }

    /// True when both vectors describe the same partition up to renaming.
    pub fn same_partition(&self, other: &LabelVector) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut fwd = std::collections::HashMap::new();
        let mut back = std::collections::HashMap::new();
        self.labels.iter().zip(&other.labels).all(|(a, b)| {
            *fwd.entry(*a).or_insert(*b) == *b && *back.entry(*b).or_insert(*a) == *a
        })
    }
}
