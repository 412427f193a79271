//! Dense symmetric matrices and the Jacobi eigensolver.
//!
//! Cyclic Jacobi with threshold sweeps is accurate to machine precision and
//! returns orthonormal eigenvectors without external dependencies; graph sizes
//! here stay in the low hundreds, where its O(n^3) sweeps are cheap. The
//! decomposition is normalized to a deterministic orientation so frequency
//! indices are stable across runs.

use crate::error::{Error, Result};

/// Default convergence tolerance on the relative off-diagonal Frobenius norm.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

/// Threshold under which two eigenvalues are treated as a degenerate cluster.
const CLUSTER_TOL: f64 = 1e-10;

/// Dense real symmetric matrix, row-major.
///
/// Construction enforces exact (bitwise) symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major entries, requiring exact symmetry.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(Error::NotSquare {
                rows: n,
                cols: entries.len() / n.max(1),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let upper = entries[i * n + j];
                let lower = entries[j * n + i];
                if upper.to_bits() != lower.to_bits() {
                    return Err(Error::NotSymmetric { i, j, upper, lower });
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Builds by evaluating `f(i, j)` for `i <= j` and mirroring.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// `values` are ascending; column `j` of `vectors` (row-major n x n) is the
/// unit eigenvector of `values[j]`. Each column is oriented so its entry of
/// largest absolute value is non-negative; degenerate clusters are ordered
/// lexicographically for determinism.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    n: usize,
    values: Vec<f64>,
    vectors: Vec<f64>,
}

impl EigenPairs {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row-major n x n matrix whose column `j` is eigenvector `j`.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector_entry(&self, row: usize, col: usize) -> f64 {
        self.vectors[row * self.n + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n).map(|row| self.vector_entry(row, col)).collect()
    }

    /// Max absolute deviation of vectors' Gram matrix from the identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..n)
                    .map(|r| self.vectors[r * n + a] * self.vectors[r * n + b])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// Eigendecomposition by cyclic Jacobi sweeps.
///
/// `tol` bounds the off-diagonal Frobenius norm relative to the input's
/// Frobenius norm ([`DEFAULT_TOL`] is the usual choice). Fails with the
/// residual reached if the sweep cap is hit.
pub fn jacobi_eigh(a: &SymMatrix, tol: f64) -> Result<EigenPairs> {
    jacobi_eigh_bounded(a, tol, MAX_SWEEPS)
}

pub(crate) fn jacobi_eigh_bounded(
    a: &SymMatrix,
    tol: f64,
    max_sweeps: usize,
) -> Result<EigenPairs> {
    if !(tol > 0.0) {
        return Err(Error::InvalidTolerance { tol });
    }
    let n = a.n;
    let mut m = a.entries.clone();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let mut converged = false;
    for sweep in 0..max_sweeps {
        let off = off_diagonal_norm(&m, n);
        let residual = off / scale;
        if residual < tol {
            converged = true;
            break;
        }
        // Skip near-zero pivots during the first sweeps; they would only
        // churn. Later sweeps rotate everything that is representable.
        let thresh = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 || apq.abs() <= thresh {
                    continue;
                }
                rotate(&mut m, &mut v, n, p, q);
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let residual = off_diagonal_norm(&m, n) / scale;
        if residual >= tol {
            return Err(Error::NoConvergence {
                sweeps: max_sweeps,
                residual,
            });
        }
    }

    let values: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    Ok(normalize_pairs(n, values, v))
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let x = m[i * n + j];
            s += 2.0 * x * x;
        }
    }
    s.sqrt()
}

/// One Jacobi rotation annihilating m[p][q], accumulating into `v`.
fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let theta = 0.5 * (aqq - app) / apq;
    // tan of the rotation angle; the small root keeps |t| <= 1 for stability.
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let s = if theta >= 0.0 { 1.0 } else { -1.0 };
        s / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);

    m[p * n + p] = app - t * apq;
    m[q * n + q] = aqq + t * apq;
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
    for j in 0..n {
        if j == p || j == q {
            continue;
        }
        let g = m[j * n + p];
        let h = m[j * n + q];
        let np = g - s * (h + g * tau);
        let nq = h + s * (g - h * tau);
        m[j * n + p] = np;
        m[p * n + j] = np;
        m[j * n + q] = nq;
        m[q * n + j] = nq;
    }
    for j in 0..n {
        let g = v[j * n + p];
        let h = v[j * n + q];
        v[j * n + p] = g - s * (h + g * tau);
        v[j * n + q] = h + s * (g - h * tau);
    }
}

/// Sorts eigenpairs ascending, fixes each column's sign so its entry of
/// largest absolute value is non-negative, and orders degenerate clusters
/// lexicographically (descending) so repeated eigenvalues get deterministic
/// columns.
fn normalize_pairs(n: usize, values: Vec<f64>, vectors: Vec<f64>) -> EigenPairs {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|r| vectors[r * n + i]).collect())
        .collect();

    for col in cols.iter_mut() {
        fix_sign(col);
    }

    // Reorder columns inside each numerically-degenerate cluster; the cluster
    // values keep their own ascending order (they are equal to CLUSTER_TOL).
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (sorted_values[end] - sorted_values[end - 1]).abs() < CLUSTER_TOL {
            end += 1;
        }
        if end - start > 1 {
            cols[start..end].sort_by(|a, b| {
                for (x, y) in a.iter().zip(b.iter()) {
                    match y.total_cmp(x) {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
                std::cmp::Ordering::Equal
            });
            sorted_values[start..end].sort_by(f64::total_cmp);
        }
        start = end;
    }

    let mut out = vec![0.0f64; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            out[r * n + j] = x;
        }
    }
    EigenPairs {
        n,
        values: sorted_values,
        vectors: out,
    }
}

fn fix_sign(col: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = col[0].abs();
    for (i, &x) in col.iter().enumerate().skip(1) {
        if x.abs() > best_abs {
            best = i;
            best_abs = x.abs();
        }
    }
    if col[best] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}

/// Relative reconstruction residual `||a - V diag(w) V^T||_F / ||a||_F`.
pub fn reconstruction_residual(a: &SymMatrix, e: &EigenPairs) -> Result<f64> {
    let n = a.n;
    if e.n != n {
        return Err(Error::DimensionMismatch {
            module: "linalg",
            detail: format!("matrix has n = {}, eigenpairs have n = {}", n, e.n),
        });
    }
    let mut diff_sq = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let mut rec = 0.0f64;
            for k in 0..n {
                rec += e.values[k] * e.vectors[i * n + k] * e.vectors[j * n + k];
            }
            let d = a.entries[i * n + j] - rec;
            diff_sq += d * d;
        }
    }
    let denom = a.frobenius_norm().max(f64::MIN_POSITIVE);
    Ok(diff_sq.sqrt() / denom)
}
