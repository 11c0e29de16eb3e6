//! External clustering metrics.

use serde::{Deserialize, Serialize};

use crate::data::LabelVector;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

pub fn evaluate(truth: &LabelVector, pred: &LabelVector) -> Result<MetricReport> {
    Ok(MetricReport {
        acc: accuracy(truth, pred)?,
        nmi: nmi(truth, pred)?,
        purity: purity(truth, pred)?,
    })
}

/// `table[t][p]` = number of points with truth `t` and prediction `p`.
fn contingency(truth: &LabelVector, pred: &LabelVector) -> Result<Vec<Vec<usize>>> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let mut table = vec![vec![0usize; pred.k()]; truth.k()];
    for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
        table[t][p] += 1;
    }
    Ok(table)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method on
/// the negated weights). Returns `assignment[row] = col`.
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<usize> {
    let n = weights.len();
    // Potentials-based O(n³) formulation with 1-based sentinels.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Fraction of points matched under the best one-to-one label mapping.
pub fn accuracy(truth: &LabelVector, pred: &LabelVector) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let size = truth.k().max(pred.k());
    let square: Vec<Vec<i64>> = (0..size)
        .map(|t| {
            (0..size)
                .map(|p| table.get(t).and_then(|r| r.get(p)).copied().unwrap_or(0) as i64)
                .collect()
        })
        .collect();
    let assignment = max_weight_assignment(&square);
    let matched: i64 = assignment.iter().enumerate().map(|(t, &p)| square[t][p]).sum();
    Ok(matched as f64 / truth.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
///
/// When both partitions are a single cluster the value is 1; when exactly
/// one is, it is 0.
pub fn nmi(truth: &LabelVector, pred: &LabelVector) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let n = truth.len() as f64;
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..pred.k()).map(|p| table.iter().map(|r| r[p]).sum()).collect();
    let (ht, hp) = (entropy(rows.iter().copied(), n), entropy(cols.iter().copied(), n));
    let single_t = rows.iter().filter(|&&c| c > 0).count() == 1;
    let single_p = cols.iter().filter(|&&c| c > 0).count() == 1;
    if single_t && single_p {
        return Ok(1.0);
    }
    if single_t || single_p {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (t, row) in table.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (rows[t] as f64 * cols[p] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (ht + hp))).clamp(0.0, 1.0))
}

/// Share of points belonging to the majority truth class of their cluster.
pub fn purity(truth: &LabelVector, pred: &LabelVector) -> Result<f64> {
    let table = contingency(truth, pred)?;
    let majority: usize = (0..pred.k())
        .map(|p| table.iter().map(|r| r[p]).max().unwrap_or(0))
        .sum();
    Ok(majority as f64 / truth.len() as f64)
}
