//! Low-rank losses on masked trajectory matrices.
//!
//! Every loss here scores `P_k = P diag(a_k ⊙ vis)`, where `vis` zeroes
//! tracks that are not visible at the reference frame.

use serde::{Deserialize, Serialize};

use super::assignment::{softmax_backward, softmax_rows};
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix, Svd};
use crate::scene::TrajectoryMatrix;

pub const DEFAULT_RANK: usize = 5;

/// Rank kept by the homogeneous (perspective) loss.
pub const PERSPECTIVE_RANK: usize = 4;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TrajLossKind {
    /// `Σ_{i≥r} σ_i`.
    #[default]
    Tail,
    /// `Σ_{i>r} σ_i²`, the rank-`r` reconstruction error.
    Rec,
    /// Rank-4 reconstruction error of the homogeneous lift.
    Per,
}

impl TrajLossKind {
    pub fn name(self) -> &'static str {
        match self {
            TrajLossKind::Tail => "tail",
            TrajLossKind::Rec => "rec",
            TrajLossKind::Per => "per",
        }
    }
}

fn check(rows: usize, p: &TrajectoryMatrix, r: usize, kind: TrajLossKind) -> Result<()> {
    if rows != p.num_tracks() {
        return Err(Error::invalid(format!(
            "assignment has {rows} rows for {} tracks",
            p.num_tracks()
        )));
    }
    let q = lifted_rows(p, kind).min(p.num_tracks());
    match kind {
        TrajLossKind::Tail if r == 0 || r > q => {
            Err(Error::range("rank index", r, format!("1..={q}")))
        }
        TrajLossKind::Rec if r > q => Err(Error::range("rank index", r, format!("0..={q}"))),
        _ => Ok(()),
    }
}

fn lifted_rows(p: &TrajectoryMatrix, kind: TrajLossKind) -> usize {
    match kind {
        TrajLossKind::Per => 3 * p.frames(),
        _ => 2 * p.frames(),
    }
}

/// The unmasked matrix a loss kind factors: `P` itself, or per frame the
/// rows `x_t, y_t, 1` for the homogeneous loss.
pub fn base_matrix(p: &TrajectoryMatrix, kind: TrajLossKind) -> Matrix {
    match kind {
        TrajLossKind::Per => {
            let (t, n) = (p.frames(), p.num_tracks());
            let pos = p.positions();
            Matrix::from_fn(3 * t, n, |i, j| {
                let (f, c) = (i / 3, i % 3);
                if c == 2 {
                    1.0
                } else {
                    pos[(2 * f + c, j)]
                }
            })
        }
        _ => p.positions().clone(),
    }
}

/// Loss value of one masked block and the coefficients `c_i` of its
/// gradient `Σ_i c_i u_i v_iᵀ`, indexed from the first contributing
/// singular triple.
fn block_terms(f: &Svd, kind: TrajLossKind, r: usize) -> (f64, usize, Vec<f64>) {
    let s = &f.sigma;
    let start = match kind {
        TrajLossKind::Tail => r - 1,
        TrajLossKind::Rec => r,
        TrajLossKind::Per => PERSPECTIVE_RANK,
    }
    .min(s.len());
    let tail = &s[start..];
    if kind == TrajLossKind::Tail {
        (tail.iter().sum(), start, vec![1.0; tail.len()])
    } else {
        (
            tail.iter().map(|v| v * v).sum(),
            start,
            tail.iter().map(|v| 2.0 * v).collect(),
        )
    }
}

/// Per-segment values and the gradient with respect to the effective
/// column weights `a_k ⊙ vis`.
fn evaluate(
    base: &Matrix,
    weights: &Matrix,
    vis: &[f64],
    kind: TrajLossKind,
    r: usize,
    want_grad: bool,
) -> Result<(Vec<f64>, Matrix)> {
    let (n, k) = (weights.rows(), weights.cols());
    let mut per_segment = vec![0.0; k];
    let mut grad = Matrix::zeros(n, k);
    let mut col = vec![0.0; n];
    for seg in 0..k {
        let mut mass = 0.0;
        for (j, c) in col.iter_mut().enumerate() {
            *c = weights[(j, seg)] * vis[j];
            mass += *c;
        }
        if mass == 0.0 {
            continue;
        }
        let f = svd(&base.scale_columns(&col))?;
        let (value, start, coef) = block_terms(&f, kind, r);
        per_segment[seg] = value;
        if !want_grad || coef.is_empty() {
            continue;
        }
        // d/dw_n = Σ_i c_i v_i[n] (u_iᵀ b_n)
        let rows = base.rows();
        let mut proj = vec![0.0; n];
        for (o, &c) in coef.iter().enumerate() {
            let i = start + o;
            proj.iter_mut().for_each(|v| *v = 0.0);
            for row in 0..rows {
                let u = f.u[(row, i)];
                if u == 0.0 {
                    continue;
                }
                for (pj, b) in proj.iter_mut().zip(base.row(row)) {
                    *pj += u * b;
                }
            }
            for j in 0..n {
                grad[(j, seg)] += c * f.v[(j, i)] * proj[j];
            }
        }
    }
    Ok((per_segment, grad))
}

/// Per-segment trajectory loss of a soft point assignment `a` (`N x K`).
pub fn traj_loss_segments(
    a: &Matrix,
    p: &TrajectoryMatrix,
    kind: TrajLossKind,
    r: usize,
) -> Result<Vec<f64>> {
    check(a.rows(), p, r, kind)?;
    let vis = p.reference_weights();
    Ok(evaluate(&base_matrix(p, kind), a, &vis, kind, r, false)?.0)
}

/// Value and logit gradient of a trajectory loss.
pub fn traj_loss_grad(
    logits: &Matrix,
    p: &TrajectoryMatrix,
    kind: TrajLossKind,
    r: usize,
) -> Result<(f64, Matrix)> {
    check(logits.rows(), p, r, kind)?;
    let a = softmax_rows(logits);
    let vis = p.reference_weights();
    let (per, mut g) = evaluate(&base_matrix(p, kind), &a, &vis, kind, r, true)?;
    for (j, &w) in vis.iter().enumerate() {
        if w != 1.0 {
            g.row_mut(j).iter_mut().for_each(|v| *v *= w);
        }
    }
    Ok((per.iter().sum(), softmax_backward(&a, &g)))
}

/// `Σ_k Σ_{i≥r} σ_i(P_k)`.
pub fn traj_loss_lt(a: &Matrix, p: &TrajectoryMatrix, r: usize) -> Result<f64> {
    Ok(traj_loss_segments(a, p, TrajLossKind::Tail, r)?
        .iter()
        .sum())
}

pub fn traj_loss_lt_grad(logits: &Matrix, p: &TrajectoryMatrix, r: usize) -> Result<Matrix> {
    Ok(traj_loss_grad(logits, p, TrajLossKind::Tail, r)?.1)
}

/// `Σ_k ‖P_k − ⌊P_k⌋_r‖_F²`.
pub fn traj_loss_rec(a: &Matrix, p: &TrajectoryMatrix, r: usize) -> Result<f64> {
    Ok(traj_loss_segments(a, p, TrajLossKind::Rec, r)?.iter().sum())
}

pub fn traj_loss_rec_grad(logits: &Matrix, p: &TrajectoryMatrix, r: usize) -> Result<Matrix> {
    Ok(traj_loss_grad(logits, p, TrajLossKind::Rec, r)?.1)
}

/// Rank-4 residual of the homogeneous lift, with the ones rows scaled by
/// the mask like the coordinate rows.
pub fn traj_loss_per(a: &Matrix, p: &TrajectoryMatrix) -> Result<f64> {
    Ok(
        traj_loss_segments(a, p, TrajLossKind::Per, PERSPECTIVE_RANK)?
            .iter()
            .sum(),
    )
}

pub fn traj_loss_per_grad(logits: &Matrix, p: &TrajectoryMatrix) -> Result<Matrix> {
    Ok(traj_loss_grad(logits, p, TrajLossKind::Per, PERSPECTIVE_RANK)?.1)
}
