//! Thin singular value decomposition.
//!
//! The input is reduced to its tall orientation, factored with column-pivoted
//! Householder QR, and the transposed triangular factor is diagonalized with
//! one-sided (Hestenes) Jacobi rotations. Jacobi gives small singular values to high
//! relative accuracy, which the tail-sum losses depend on when a group of
//! trajectories is exactly low rank.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Thin SVD factors `A = U diag(sigma) Vᵀ` with `q = min(m, n)` triples.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `m x q`, orthonormal columns.
    pub u: Matrix,
    /// Descending, nonnegative.
    pub sigma: Vec<f64>,
    /// `n x q`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn rank_count(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        truncate_unchecked(self, self.sigma.len())
    }
}

const MAX_SWEEPS: usize = 80;

/// Computes the thin SVD of `a`.
///
/// Singular values are sorted in descending order and every column of `U`
/// has its first entry of magnitude above `1e-12` nonnegative, so the
/// factors are reproducible for a given input.
pub fn svd(a: &Matrix) -> Result<Svd> {
    check_input(a)?;
    let (m, n) = a.shape();
    let (u, sigma, v) = if m >= n {
        let cols = a.transpose().into_vec();
        let t = tall_svd(cols, m, n, true);
        (
            col_major_to_matrix(&t.left, m, n),
            t.sigma,
            col_major_to_matrix(&t.right, n, n),
        )
    } else {
        // Row-major A is column-major Aᵀ, which is n x m and tall.
        let t = tall_svd(a.as_slice().to_vec(), n, m, true);
        (
            col_major_to_matrix(&t.right, m, m),
            t.sigma,
            col_major_to_matrix(&t.left, n, m),
        )
    };
    Ok(canonicalize(u, sigma, v))
}

/// Singular values only, descending.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    check_input(a)?;
    let (m, n) = a.shape();
    let t = if m >= n {
        tall_svd(a.transpose().into_vec(), m, n, false)
    } else {
        tall_svd(a.as_slice().to_vec(), n, m, false)
    };
    let mut s = t.sigma;
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Best rank-`r` approximation `⌊U⌋_r ⌊Σ⌋_r ⌊V⌋_rᵀ`; `r = 0` gives zeros.
pub fn truncate(f: &Svd, r: usize) -> Result<Matrix> {
    let q = f.sigma.len();
    if r > q {
        return Err(Error::range("truncation rank", r, format!("0..={q}")));
    }
    Ok(truncate_unchecked(f, r))
}

fn truncate_unchecked(f: &Svd, r: usize) -> Matrix {
    let (m, n) = (f.u.rows(), f.v.rows());
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        let row = out.row_mut(i);
        for k in 0..r {
            let c = f.u[(i, k)] * f.sigma[k];
            if c == 0.0 {
                continue;
            }
            for (j, o) in row.iter_mut().enumerate() {
                *o += c * f.v[(j, k)];
            }
        }
    }
    out
}

fn check_input(a: &Matrix) -> Result<()> {
    if a.is_empty() {
        return Err(Error::invalid("svd of an empty matrix"));
    }
    if !a.is_finite() {
        return Err(Error::invalid("svd input contains non-finite entries"));
    }
    Ok(())
}

fn col_major_to_matrix(buf: &[f64], rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| buf[j * rows + i])
}

/// Sorts triples by descending sigma and fixes column signs.
fn canonicalize(u: Matrix, sigma: Vec<f64>, v: Matrix) -> Svd {
    let q = sigma.len();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));
    let mut u_out = u.select_columns(&order);
    let mut v_out = v.select_columns(&order);
    let sigma_out: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    for k in 0..q {
        let lead = (0..u_out.rows())
            .map(|i| u_out[(i, k)])
            .find(|x| x.abs() > 1e-12)
            .unwrap_or(0.0);
        if lead < 0.0 {
            for i in 0..u_out.rows() {
                u_out[(i, k)] = -u_out[(i, k)];
            }
            for i in 0..v_out.rows() {
                v_out[(i, k)] = -v_out[(i, k)];
            }
        }
    }
    Svd {
        u: u_out,
        sigma: sigma_out,
        v: v_out,
    }
}

pub(crate) struct TallSvd {
    /// `p x q` column-major left factor (empty when vectors were not requested).
    pub left: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `q x q` column-major right factor (empty when vectors were not requested).
    pub right: Vec<f64>,
}

/// SVD of a tall `p x q` column-major matrix (`p >= q`), unsorted.
///
/// `B Π = Q R` with column pivoting, then Jacobi on `Rᵀ`, which is close to
/// diagonal and needs far fewer sweeps than `R`. With `Rᵀ V = W Σ`,
/// `B = (Q V) Σ (Π W)ᵀ`.
pub(crate) fn tall_svd(mut b: Vec<f64>, p: usize, q: usize, vectors: bool) -> TallSvd {
    debug_assert!(p >= q && b.len() == p * q);
    let (reflectors, perm) = householder_qr(&mut b, p, q);

    // Rᵀ, column-major q x q: column c holds row c of R.
    let mut x = vec![0.0; q * q];
    for c in 0..q {
        for i in 0..=c {
            x[i * q + c] = b[c * p + i];
        }
    }
    let mut acc = if vectors {
        identity_col_major(q)
    } else {
        Vec::new()
    };
    jacobi_orthogonalize(&mut x, q, q, vectors.then_some(&mut acc[..]));

    let sigma: Vec<f64> = (0..q)
        .map(|c| dot(&x[c * q..(c + 1) * q], &x[c * q..(c + 1) * q]).sqrt())
        .collect();
    if !vectors {
        return TallSvd {
            left: Vec::new(),
            sigma,
            right: Vec::new(),
        };
    }

    let w = normalized_basis(&x, &sigma, q);
    let mut right = vec![0.0; q * q];
    for c in 0..q {
        for i in 0..q {
            right[c * q + perm[i]] = w[c * q + i];
        }
    }
    // left = Q [V; 0]
    let mut left = vec![0.0; p * q];
    for c in 0..q {
        left[c * p..c * p + q].copy_from_slice(&acc[c * q..(c + 1) * q]);
    }
    for (j, (v, beta)) in reflectors.iter().enumerate().rev() {
        if *beta == 0.0 {
            continue;
        }
        for c in 0..q {
            let col = &mut left[c * p + j..(c + 1) * p];
            let s = beta * dot(v, col);
            if s != 0.0 {
                for (x, vi) in col.iter_mut().zip(v) {
                    *x -= s * vi;
                }
            }
        }
    }
    TallSvd { left, sigma, right }
}

/// In-place Householder QR with column pivoting of a column-major `p x q`
/// matrix. On return the upper triangle holds `R` of the permuted matrix;
/// the reflectors `(v, beta)` with `H = I - beta v vᵀ` acting on rows
/// `j..p` and the permutation (`perm[j]` is the original index of column
/// `j`) are returned.
fn householder_qr(b: &mut [f64], p: usize, q: usize) -> (Vec<(Vec<f64>, f64)>, Vec<usize>) {
    let mut reflectors = Vec::with_capacity(q);
    let mut perm: Vec<usize> = (0..q).collect();
    for j in 0..q {
        // Largest remaining column, recomputed so no downdating error builds up.
        let mut pivot = j;
        let mut best = -1.0;
        for c in j..q {
            let col = &b[c * p + j..(c + 1) * p];
            let n = dot(col, col);
            if n > best {
                best = n;
                pivot = c;
            }
        }
        if pivot != j {
            for i in 0..p {
                b.swap(j * p + i, pivot * p + i);
            }
            perm.swap(j, pivot);
        }
        let col = &b[j * p + j..(j + 1) * p];
        let norm = dot(col, col).sqrt();
        if norm == 0.0 {
            reflectors.push((vec![0.0; p - j], 0.0));
            continue;
        }
        let alpha = if col[0] > 0.0 { -norm } else { norm };
        let mut v = col.to_vec();
        v[0] -= alpha;
        let vnorm2 = dot(&v, &v);
        let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        for c in j + 1..q {
            let col = &mut b[c * p + j..(c + 1) * p];
            let s = beta * dot(&v, col);
            if s != 0.0 {
                for (x, vi) in col.iter_mut().zip(&v) {
                    *x -= s * vi;
                }
            }
        }
        let col = &mut b[j * p + j..(j + 1) * p];
        col[0] = alpha;
        for x in &mut col[1..] {
            *x = 0.0;
        }
        reflectors.push((v, beta));
    }
    (reflectors, perm)
}

fn identity_col_major(q: usize) -> Vec<f64> {
    let mut m = vec![0.0; q * q];
    for i in 0..q {
        m[i * q + i] = 1.0;
    }
    m
}

/// One-sided Jacobi: rotates the columns of the column-major `rows x cols`
/// matrix `x` until they are mutually orthogonal, accumulating the
/// rotations into `acc` (`cols x cols`, column-major) when given.
pub(crate) fn jacobi_orthogonalize(
    x: &mut [f64],
    rows: usize,
    cols: usize,
    mut acc: Option<&mut [f64]>,
) -> usize {
    let tol = f64::EPSILON * rows.max(1) as f64;
    let mut norms: Vec<f64> = (0..cols)
        .map(|c| dot(&x[c * rows..(c + 1) * rows], &x[c * rows..(c + 1) * rows]))
        .collect();
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = norms[i];
                let beta = norms[j];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let (xi, xj) = column_pair(x, rows, i, j);
                let gamma = dot(xi, xj);
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(xi, xj, c, s);
                norms[i] = dot(xi, xi);
                norms[j] = dot(xj, xj);
                if let Some(acc) = acc.as_deref_mut() {
                    let (ai, aj) = column_pair(acc, cols, i, j);
                    rotate(ai, aj, c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    sweeps
}

#[inline]
fn rotate(xi: &mut [f64], xj: &mut [f64], c: f64, s: f64) {
    for (a, b) in xi.iter_mut().zip(xj.iter_mut()) {
        let (ai, bj) = (*a, *b);
        *a = c * ai - s * bj;
        *b = s * ai + c * bj;
    }
}

#[inline]
fn column_pair(buf: &mut [f64], rows: usize, i: usize, j: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(i < j);
    let (head, tail) = buf.split_at_mut(j * rows);
    (&mut head[i * rows..(i + 1) * rows], &mut tail[..rows])
}

/// Normalizes the orthogonal columns of `x` and completes columns with zero
/// norm to an orthonormal basis of `R^q`.
fn normalized_basis(x: &[f64], sigma: &[f64], q: usize) -> Vec<f64> {
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let floor = (smax * 1e-280).max(f64::MIN_POSITIVE);
    let mut w = vec![0.0; q * q];
    let mut missing = Vec::new();
    for c in 0..q {
        if sigma[c] > floor {
            for i in 0..q {
                w[c * q + i] = x[c * q + i] / sigma[c];
            }
        } else {
            missing.push(c);
        }
    }
    for c in missing {
        let filled: Vec<usize> = (0..q)
            .filter(|&k| dot(&w[k * q..(k + 1) * q], &w[k * q..(k + 1) * q]) > 0.5)
            .collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..q {
            let mut cand = vec![0.0; q];
            cand[e] = 1.0;
            for _ in 0..2 {
                for &k in &filled {
                    let wk = &w[k * q..(k + 1) * q];
                    let proj = dot(wk, &cand);
                    for (ci, wi) in cand.iter_mut().zip(wk) {
                        *ci -= proj * wi;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, cand));
            }
        }
        let (norm, cand) = best.expect("q >= 1");
        for i in 0..q {
            w[c * q + i] = cand[i] / norm;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eig::tests::jacobi_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_factors(a: &Matrix, f: &Svd) {
        let q = a.rows().min(a.cols());
        assert_eq!(f.sigma.len(), q);
        for w in f.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(f.sigma.iter().all(|&s| s >= 0.0));
        let utu = f.u.t_matmul(&f.u).sub(&Matrix::identity(q)).max_abs();
        let vtv = f.v.t_matmul(&f.v).sub(&Matrix::identity(q)).max_abs();
        assert!(utu <= 1e-10, "UᵀU - I = {utu}");
        assert!(vtv <= 1e-10, "VᵀV - I = {vtv}");
        let rec = f.reconstruct().sub(a).max_abs();
        assert!(
            rec <= 1e-8 * f.sigma[0].max(1e-300),
            "reconstruction error {rec}"
        );
    }

    #[test]
    fn diagonal_values() {
        let f = svd(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(f.sigma, vec![3.0, 1.0]);
        let f = svd(&Matrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(f.sigma, vec![3.0, 1.0]);
    }

    #[test]
    fn zero_matrix_has_orthonormal_factors() {
        let a = Matrix::zeros(4, 3);
        let f = svd(&a).unwrap();
        assert_eq!(f.sigma, vec![0.0; 3]);
        let utu = f.u.t_matmul(&f.u).sub(&Matrix::identity(3)).max_abs();
        assert!(utu < 1e-12);
    }

    #[test]
    fn singular_values_match_jacobi_eigen_oracle() {
        let a = random_matrix(5, 4, 11);
        let f = svd(&a).unwrap();
        check_factors(&a, &f);
        let mut eig = jacobi_eigenvalues(&a.t_matmul(&a));
        eig.sort_by(|x, y| y.total_cmp(x));
        for (s, l) in f.sigma.iter().zip(&eig) {
            assert!((s - l.max(0.0).sqrt()).abs() < 1e-9, "{s} vs {}", l.sqrt());
        }
    }

    #[test]
    fn factor_invariants_on_many_shapes() {
        for (seed, (m, n)) in [(1, 1), (1, 5), (5, 1), (3, 7), (7, 3), (20, 20), (32, 90)]
            .into_iter()
            .enumerate()
        {
            let a = random_matrix(m, n, seed as u64);
            check_factors(&a, &svd(&a).unwrap());
        }
    }

    #[test]
    fn rank_deficient_input_keeps_orthonormal_factors() {
        let b = random_matrix(12, 3, 5);
        let c = random_matrix(3, 9, 6);
        let a = b.matmul(&c);
        let f = svd(&a).unwrap();
        check_factors(&a, &f);
        assert!(f.sigma[3] < 1e-12 * f.sigma[0]);
    }

    #[test]
    fn signs_are_canonical() {
        let a = random_matrix(6, 4, 8);
        let f = svd(&a).unwrap();
        for k in 0..4 {
            let lead = (0..6)
                .map(|i| f.u[(i, k)])
                .find(|x| x.abs() > 1e-12)
                .unwrap();
            assert!(lead >= 0.0);
        }
        let g = svd(&a).unwrap();
        assert_eq!(f.u, g.u);
        assert_eq!(f.v, g.v);
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = Matrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        assert!(matches!(svd(&a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn values_only_path_agrees() {
        let a = random_matrix(9, 17, 3);
        let s = singular_values(&a).unwrap();
        let f = svd(&a).unwrap();
        for (x, y) in s.iter().zip(&f.sigma) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_rank_one_is_exact() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, -1.0, 2.0];
        let a = Matrix::from_fn(3, 4, |i, j| u[i] * v[j]);
        let f = svd(&a).unwrap();
        let t = truncate(&f, 1).unwrap();
        assert!(t.sub(&a).max_abs() < 1e-12);
        assert!(truncate(&f, 4).is_err());
        assert_eq!(truncate(&f, 0).unwrap(), Matrix::zeros(3, 4));
    }

    #[test]
    fn truncation_follows_eckart_young() {
        let a = random_matrix(6, 6, 21);
        let f = svd(&a).unwrap();
        let err = truncate(&f, 2).unwrap().sub(&a).frobenius_norm();
        let tail: f64 = f.sigma[2..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - tail).abs() < 1e-10, "{err} vs {tail}");
        let full = truncate(&f, 6).unwrap().sub(&a).max_abs();
        assert!(full < 1e-8 * f.sigma[0]);
    }
}
