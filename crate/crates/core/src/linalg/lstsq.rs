use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Relative ridge added to the normal equations, scaled by `trace(EᵀE)/p`.
pub const RIDGE_RELATIVE: f64 = 1e-8;

/// Least-squares solution of `E θ ≈ F` from the ridge-regularized normal
/// equations `(EᵀE + εI) θ = EᵀF`, `ε = 1e-8 · trace(EᵀE) / p`.
///
/// An all-zero design yields `θ = 0`.
pub fn lstsq(e: &Matrix, f: &Matrix) -> Result<Matrix> {
    if e.rows() != f.rows() {
        return Err(Error::invalid(format!(
            "lstsq row mismatch: design has {} rows, targets have {}",
            e.rows(),
            f.rows()
        )));
    }
    if e.rows() == 0 || e.cols() == 0 {
        return Err(Error::invalid("lstsq needs a non-empty design"));
    }
    if !e.is_finite() || !f.is_finite() {
        return Err(Error::invalid("lstsq input contains non-finite entries"));
    }
    let gram = e.t_matmul(e);
    let rhs = e.t_matmul(f);
    Ok(solve_normal(gram, &rhs))
}

/// Solves `(G + εI) θ = B` for a symmetric positive semi-definite Gram
/// matrix, with the same ridge rule as [`lstsq`].
pub(crate) fn solve_normal(mut gram: Matrix, rhs: &Matrix) -> Matrix {
    let p = gram.rows();
    let tr = gram.trace();
    if tr <= 0.0 {
        return Matrix::zeros(p, rhs.cols());
    }
    let ridge = RIDGE_RELATIVE * tr / p as f64;
    for i in 0..p {
        gram[(i, i)] += ridge;
    }
    match cholesky(&gram) {
        Some(l) => cholesky_solve(&l, rhs),
        None => eigen_solve(&gram, rhs),
    }
}

/// [`solve_normal`] followed by `sweeps` rounds of iterative refinement
/// against the unregularized system `G θ = B`, which removes most of the
/// ridge bias in well-determined directions.
pub(crate) fn solve_normal_refined(gram: &Matrix, rhs: &Matrix, sweeps: usize) -> Matrix {
    let p = gram.rows();
    let tr = gram.trace();
    if tr <= 0.0 {
        return Matrix::zeros(p, rhs.cols());
    }
    let mut reg = gram.clone();
    let ridge = RIDGE_RELATIVE * tr / p as f64;
    for i in 0..p {
        reg[(i, i)] += ridge;
    }
    let Some(l) = cholesky(&reg) else {
        return eigen_solve(&reg, rhs);
    };
    let mut theta = cholesky_solve(&l, rhs);
    for _ in 0..sweeps {
        let residual = rhs.sub(&gram.matmul(&theta));
        theta = theta.add(&cholesky_solve(&l, &residual));
    }
    theta
}

/// Lower Cholesky factor, `None` if the matrix is not numerically positive
/// definite.
pub(crate) fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

pub(crate) fn cholesky_solve(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    x
}

fn eigen_solve(a: &Matrix, b: &Matrix) -> Matrix {
    let eig = super::eig::sym_eig(a).expect("gram matrix is symmetric");
    let top = eig.values.iter().cloned().fold(0.0, f64::max);
    let proj = eig.vectors.t_matmul(b);
    let mut scaled = proj.clone();
    for (i, &lam) in eig.values.iter().enumerate() {
        let inv = if lam > top * 1e-14 { 1.0 / lam } else { 0.0 };
        for v in scaled.row_mut(i) {
            *v *= inv;
        }
    }
    eig.vectors.matmul(&scaled)
}
