//! Tail sums of singular values and their (sub)gradients.
//!
//! The rank index `r` is 1-based and the sum includes `σ_r`: driving it to
//! zero pushes a matrix toward rank `r - 1`.

use super::matrix::Matrix;
use super::svd::{singular_values, svd, Svd};
use crate::error::{Error, Result};

fn check_rank_index(r: usize, q: usize) -> Result<()> {
    if r == 0 || r > q {
        return Err(Error::range("rank index", r, format!("1..={q}")));
    }
    Ok(())
}

/// `Σ_{i=r}^{q} σ_i(A)`.
pub fn tail_singular_sum(a: &Matrix, r: usize) -> Result<f64> {
    let q = a.rows().min(a.cols());
    check_rank_index(r, q)?;
    let s = singular_values(a)?;
    Ok(s[r - 1..].iter().sum())
}

/// `Σ_{i=r}^{q} u_i v_iᵀ`, the gradient of [`tail_singular_sum`] where the
/// singular values are distinct. Repeated or vanishing singular values
/// keep the computed singular vectors, which is a valid subgradient.
pub fn tail_singular_grad(a: &Matrix, r: usize) -> Result<Matrix> {
    let q = a.rows().min(a.cols());
    check_rank_index(r, q)?;
    let f = svd(a)?;
    Ok(tail_grad_from_factors(&f, r))
}

pub(crate) fn tail_grad_from_factors(f: &Svd, r: usize) -> Matrix {
    let (m, n) = (f.u.rows(), f.v.rows());
    let q = f.sigma.len();
    let mut g = Matrix::zeros(m, n);
    for i in 0..m {
        let row = g.row_mut(i);
        for k in r - 1..q {
            let c = f.u[(i, k)];
            if c == 0.0 {
                continue;
            }
            for (j, o) in row.iter_mut().enumerate() {
                *o += c * f.v[(j, k)];
            }
        }
    }
    g
}
