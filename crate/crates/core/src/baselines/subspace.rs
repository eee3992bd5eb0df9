//! Self-expressive subspace clustering: sparse (SSC) and low-rank (LRR)
//! coefficient solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::sig9;
use crate::linalg::{cholesky, cholesky_solve, svd, Matrix};

pub const SSC_ALPHA: f64 = 100.0;
pub const SSC_TOLERANCE: f64 = 1e-4;
pub const SSC_MAX_ITER: usize = 200;

pub const LRR_LAMBDA: f64 = 0.2;
pub const LRR_RHO: f64 = 1.01;
pub const LRR_MAX_ITER: usize = 10_000;
pub const LRR_TOLERANCE: f64 = 1e-7;
const LRR_MU0: f64 = 1e-6;
const LRR_MAX_MU: f64 = 1e10;
const LRR_DIVERGENCE_RUN: usize = 500;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceMethod {
    Ssc,
    Lrr,
}

#[derive(Clone, Debug)]
pub struct CoefficientMatrix {
    /// `N x N`; column `j` expresses point `j` through the others.
    pub c: Matrix,
    pub method: SubspaceMethod,
    pub iterations: usize,
    /// Final stopping quantity of the solver.
    pub residual: f64,
    /// Column-sparse error term (LRR only), `d x N`.
    pub error: Option<Matrix>,
}

impl CoefficientMatrix {
    /// Dense CSV, one row per matrix row, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.c.rows() {
            let row: Vec<String> = self.c.row(i).iter().map(|&v| sig9(v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn check_data(d: &Matrix) -> Result<()> {
    if d.cols() < 2 || d.rows() == 0 {
        return Err(Error::invalid(format!(
            "need at least two data columns, got {}x{}",
            d.rows(),
            d.cols()
        )));
    }
    if !d.is_finite() {
        return Err(Error::invalid("data matrix is not finite"));
    }
    Ok(())
}

fn normalize_columns(d: &Matrix) -> Result<Matrix> {
    let norms: Vec<f64> = (0..d.cols())
        .map(|j| d.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Degenerate(format!("column {j} is zero")));
    }
    Ok(d.scale_columns(&norms.iter().map(|v| 1.0 / v).collect::<Vec<_>>()))
}

fn zero_diagonal(m: &mut Matrix) {
    for i in 0..m.rows().min(m.cols()) {
        m[(i, i)] = 0.0;
    }
}

/// Sparse subspace clustering by ADMM on
/// `min ‖C‖₁ + λ/2 ‖Y − YC‖_F²  s.t. diag(C) = 0`, with `Y` the
/// column-normalized data, `λ = alpha / μ` and
/// `μ = min_i max_{j≠i} |y_iᵀ y_j|`. The penalty parameter is `alpha`.
///
/// Stops when successive iterates of `C` differ by less than `1e-4` in max
/// norm, or after 200 iterations.
pub fn ssc_admm(d: &Matrix, alpha: f64) -> Result<CoefficientMatrix> {
    check_data(d)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let y = normalize_columns(d)?;
    let n = y.cols();
    let gram = y.t_matmul(&y);
    let mu_min = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| gram[(i, j)].abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min);
    if mu_min == 0.0 {
        return Err(Error::Degenerate(
            "some column is orthogonal to every other column; SSC penalty is undefined".into(),
        ));
    }
    let mu1 = alpha / mu_min;
    let mu2 = alpha;

    let mut system = gram.scale(mu1);
    for i in 0..n {
        system[(i, i)] += mu2;
    }
    let l = cholesky(&system)
        .ok_or_else(|| Error::Degenerate("SSC system is not positive definite".into()))?;
    let inv = cholesky_solve(&l, &Matrix::identity(n));
    let base = inv.matmul(&gram.scale(mu1));

    let mut c1 = Matrix::zeros(n, n);
    let mut lambda = Matrix::zeros(n, n);
    let mut c2 = Matrix::zeros(n, n);
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    while err > SSC_TOLERANCE && iterations < SSC_MAX_ITER {
        iterations += 1;
        let rhs = c1.scale(mu2).sub(&lambda);
        let mut z = base.add(&inv.matmul(&rhs));
        zero_diagonal(&mut z);
        let shrink = 1.0 / mu2;
        c2 = z.zip_map(&lambda, |zv, lv| {
            let v = zv + lv / mu2;
            v.signum() * (v.abs() - shrink).max(0.0)
        });
        zero_diagonal(&mut c2);
        lambda = lambda.add(&z.sub(&c2).scale(mu2));
        err = c2.sub(&c1).max_abs();
        c1 = c2.clone();
    }
    Ok(CoefficientMatrix {
        c: c2,
        method: SubspaceMethod::Ssc,
        iterations,
        residual: err,
        error: None,
    })
}

/// Orthonormal basis of the column space of `a`.
fn orth(a: &Matrix) -> Result<Matrix> {
    let f = svd(a)?;
    let top = f.sigma.first().copied().unwrap_or(0.0);
    let tol = a.rows().max(a.cols()) as f64 * f64::EPSILON * top;
    let r = f.sigma.iter().filter(|&&s| s > tol).count();
    Ok(Matrix::from_fn(a.rows(), r, |i, j| f.u[(i, j)]))
}

/// Singular value thresholding at `tau`.
fn svt(a: &Matrix, tau: f64) -> Result<Matrix> {
    let f = svd(a)?;
    let (m, n) = a.shape();
    let mut out = Matrix::zeros(m, n);
    for (k, &s) in f.sigma.iter().enumerate() {
        if s <= tau {
            break;
        }
        let w = s - tau;
        for i in 0..m {
            let c = f.u[(i, k)] * w;
            if c == 0.0 {
                continue;
            }
            for (o, j) in out.row_mut(i).iter_mut().zip(0..n) {
                *o += c * f.v[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Column-wise shrinkage, the proximal map of `tau ‖·‖_{2,1}`.
fn shrink_columns(a: &Matrix, tau: f64) -> Matrix {
    let mut out = a.clone();
    for j in 0..a.cols() {
        let norm = a.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = if norm > tau { (norm - tau) / norm } else { 0.0 };
        for i in 0..a.rows() {
            out[(i, j)] *= scale;
        }
    }
    out
}

/// Low-rank representation by inexact augmented Lagrangian on
/// `min ‖Z‖_* + λ‖E‖_{2,1}  s.t. D = AZ + E`, with `A = DQ` and `Q` an
/// orthonormal basis of the row space of `D`; returns `C = QZ`.
///
/// Stops when both `D − AZ − E` and `Z − J` are below `1e-7` in max norm.
/// Reports divergence when that quantity grows for 500 iterations in a row.
pub fn lrr(d: &Matrix, lambda: f64, rho: f64, max_iter: usize) -> Result<CoefficientMatrix> {
    check_data(d)?;
    if !(lambda > 0.0 && lambda.is_finite()) || !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::invalid(format!(
            "LRR needs lambda > 0 and rho >= 1, got {lambda}, {rho}"
        )));
    }
    let q = orth(&d.transpose())?;
    if q.cols() == 0 {
        return Err(Error::Degenerate("data matrix is zero".into()));
    }
    let a = d.matmul(&q);
    let (dim, n) = d.shape();
    let m = a.cols();
    let atx = a.t_matmul(d);
    let mut ata = a.t_matmul(&a);
    for i in 0..m {
        ata[(i, i)] += 1.0;
    }
    let inv_a = cholesky_solve(
        &cholesky(&ata).ok_or_else(|| Error::Degenerate("LRR normal matrix is singular".into()))?,
        &Matrix::identity(m),
    );

    let mut z = Matrix::zeros(m, n);
    let mut e = Matrix::zeros(dim, n);
    let mut y1 = Matrix::zeros(dim, n);
    let mut y2 = Matrix::zeros(m, n);
    let mut mu = LRR_MU0;
    let mut iterations = 0;
    let mut stop = f64::INFINITY;
    let mut rising = 0;
    while iterations < max_iter {
        iterations += 1;
        let j = svt(&z.add(&y2.scale(1.0 / mu)), 1.0 / mu)?;
        let rhs = atx
            .sub(&a.t_matmul(&e))
            .add(&j)
            .add(&a.t_matmul(&y1).sub(&y2).scale(1.0 / mu));
        z = inv_a.matmul(&rhs);
        let xmaz = d.sub(&a.matmul(&z));
        e = shrink_columns(&xmaz.add(&y1.scale(1.0 / mu)), lambda / mu);
        let leq1 = xmaz.sub(&e);
        let leq2 = z.sub(&j);
        let next = leq1.max_abs().max(leq2.max_abs());
        if !next.is_finite() {
            return Err(Error::Diverged {
                iterations,
                detail: "constraint residual became non-finite".into(),
            });
        }
        rising = if next > stop { rising + 1 } else { 0 };
        stop = next;
        if stop < LRR_TOLERANCE {
            break;
        }
        if rising >= LRR_DIVERGENCE_RUN {
            return Err(Error::Diverged {
                iterations,
                detail: format!(
                    "constraint residual grew for {rising} consecutive iterations, now {stop:.3e}"
                ),
            });
        }
        y1 = y1.add(&leq1.scale(mu));
        y2 = y2.add(&leq2.scale(mu));
        mu = (mu * rho).min(LRR_MAX_MU);
    }
    Ok(CoefficientMatrix {
        c: q.matmul(&z),
        method: SubspaceMethod::Lrr,
        iterations,
        residual: stop,
        error: Some(e),
    })
}
