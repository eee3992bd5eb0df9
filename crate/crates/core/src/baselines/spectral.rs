use super::kmeans::kmeans;
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix, SymEig};

pub const SPECTRAL_RESTARTS: usize = 10;

/// `W = |C| + |C|ᵀ` with a zero diagonal.
pub fn affinity(c: &Matrix) -> Result<Matrix> {
    if c.rows() != c.cols() {
        return Err(Error::invalid(format!(
            "coefficients must be square, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let n = c.rows();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            c[(i, j)].abs() + c[(j, i)].abs()
        }
    }))
}

/// Eigendecomposition of `I − D^{-1/2} W D^{-1/2}`. Rows with zero degree
/// are given degree 1.
pub fn spectral_embedding(w: &Matrix) -> Result<SymEig> {
    if w.rows() != w.cols() || w.is_empty() {
        return Err(Error::invalid("affinity must be a non-empty square matrix"));
    }
    let n = w.rows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = w.row(i).iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let lap = Matrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]
    });
    sym_eig(&lap)
}

/// Clusters from a precomputed [`spectral_embedding`], so several `k` can
/// share one eigendecomposition.
pub fn cluster_embedding(eig: &SymEig, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = eig.values.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "spectral clustering needs 1 <= k <= N, got k = {k}, N = {n}"
        )));
    }
    let mut rows = Matrix::from_fn(n, k, |i, j| eig.vectors[(i, j)]);
    for i in 0..n {
        let r = rows.row_mut(i);
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            r.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(kmeans(&rows, k, SPECTRAL_RESTARTS, seed)?.labels)
}

pub fn spectral_cluster(w: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > w.rows() {
        return Err(Error::invalid(format!(
            "spectral clustering needs k <= N, got k = {k}, N = {}",
            w.rows()
        )));
    }
    cluster_embedding(&spectral_embedding(w)?, k, seed)
}
