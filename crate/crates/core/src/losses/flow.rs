//! Flow loss: how well a quadratic motion model fits the flow inside each
//! soft segment, solved per segment by least squares.

use super::assignment::{softmax_backward, softmax_rows, AssignmentMode, SoftAssignment};
use crate::error::{Error, Result};
use crate::linalg::{solve_normal_refined, Matrix};
use crate::scene::TrajectoryMatrix;

pub const EMBED_DIM: usize = 6;

const REFINE_SWEEPS: usize = 8;

/// `[x, x², y, y², xy, 1]`.
pub fn embed_point(x: f64, y: f64) -> [f64; EMBED_DIM] {
    [x, x * x, y, y * y, x * y, 1.0]
}

fn normalized(i: usize, n: usize) -> f64 {
    if n > 1 {
        i as f64 / (n - 1) as f64
    } else {
        0.0
    }
}

/// `HW x 6` embedding of the pixel lattice, row-major, with coordinates
/// normalized to `[0, 1]`.
pub fn quad_embed(height: usize, width: usize) -> Matrix {
    let mut e = Matrix::zeros(height * width, EMBED_DIM);
    for row in 0..height {
        for col in 0..width {
            let v = embed_point(normalized(col, width), normalized(row, height));
            e.row_mut(row * width + col).copy_from_slice(&v);
        }
    }
    e
}

/// Per-segment fits of a displacement field.
#[derive(Clone, Debug)]
pub struct SegmentFit {
    pub value: f64,
    pub per_segment: Vec<f64>,
    /// `6 x 2` coefficients per segment.
    pub theta: Vec<Matrix>,
    /// `‖f_p - θ_kᵀ e_p‖²` for every row `p` and segment `k`.
    pub sq_residuals: Matrix,
}

/// Fits `θ_k` on rows weighted by `masks[:, k]` and returns
/// `Σ_k Σ_p m_pk² ‖f_p - θ_kᵀ e_p‖²`.
pub(crate) fn fit_segments(emb: &Matrix, masks: &Matrix, flow: &Matrix) -> SegmentFit {
    let (n, k) = (masks.rows(), masks.cols());
    let mut per_segment = vec![0.0; k];
    let mut theta = Vec::with_capacity(k);
    let mut sq = Matrix::zeros(n, k);
    for (seg, slot) in per_segment.iter_mut().enumerate() {
        let mut gram = Matrix::zeros(EMBED_DIM, EMBED_DIM);
        let mut rhs = Matrix::zeros(EMBED_DIM, 2);
        for p in 0..n {
            let m2 = masks[(p, seg)] * masks[(p, seg)];
            if m2 == 0.0 {
                continue;
            }
            let e = emb.row(p);
            let (fx, fy) = (flow[(p, 0)], flow[(p, 1)]);
            for i in 0..EMBED_DIM {
                let wi = m2 * e[i];
                for j in i..EMBED_DIM {
                    gram[(i, j)] += wi * e[j];
                }
                rhs[(i, 0)] += wi * fx;
                rhs[(i, 1)] += wi * fy;
            }
        }
        for i in 0..EMBED_DIM {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let th = solve_normal_refined(&gram, &rhs, REFINE_SWEEPS);
        let mut total = 0.0;
        for p in 0..n {
            let e = emb.row(p);
            let (mut px, mut py) = (0.0, 0.0);
            for i in 0..EMBED_DIM {
                px += e[i] * th[(i, 0)];
                py += e[i] * th[(i, 1)];
            }
            let (rx, ry) = (flow[(p, 0)] - px, flow[(p, 1)] - py);
            let r2 = rx * rx + ry * ry;
            sq[(p, seg)] = r2;
            total += masks[(p, seg)] * masks[(p, seg)] * r2;
        }
        *slot = total;
        theta.push(th);
    }
    SegmentFit {
        value: per_segment.iter().sum(),
        per_segment,
        theta,
        sq_residuals: sq,
    }
}

/// Envelope-theorem gradient of [`fit_segments`] with respect to the masks.
fn mask_gradient(masks: &Matrix, fit: &SegmentFit) -> Matrix {
    masks.zip_map(&fit.sq_residuals, |m, r| 2.0 * m * r)
}

fn check_dense(rows: usize, flow: &Matrix, grid: (usize, usize)) -> Result<()> {
    let (h, w) = grid;
    if rows != h * w || flow.rows() != h * w || flow.cols() != 2 {
        return Err(Error::invalid(format!(
            "flow loss shape mismatch: {rows} mask rows, flow {}x{}, grid {h}x{w}",
            flow.rows(),
            flow.cols()
        )));
    }
    if !flow.is_finite() {
        return Err(Error::invalid("flow contains non-finite values"));
    }
    Ok(())
}

/// Dense flow loss of pixel-mode masks against an `HW x 2` flow field.
pub fn flow_loss(m: &SoftAssignment, flow: &Matrix, grid: (usize, usize)) -> Result<SegmentFit> {
    if m.mode() != AssignmentMode::Pixel {
        return Err(Error::invalid("flow loss needs a pixel-mode assignment"));
    }
    check_dense(m.rows(), flow, grid)?;
    Ok(fit_segments(&quad_embed(grid.0, grid.1), m.weights(), flow))
}

/// Gradient of [`flow_loss`] with respect to the pre-softmax logits, holding
/// each least-squares fit fixed at its optimum.
pub fn flow_loss_grad(logits: &Matrix, flow: &Matrix, grid: (usize, usize)) -> Result<Matrix> {
    check_dense(logits.rows(), flow, grid)?;
    let a = softmax_rows(logits);
    let fit = fit_segments(&quad_embed(grid.0, grid.1), &a, flow);
    Ok(softmax_backward(&a, &mask_gradient(&a, &fit)))
}

/// Point-mode flow loss: embedding evaluated at `positions` (normalized),
/// displacements in pixels.
pub fn point_flow_loss(
    masks: &Matrix,
    positions: &Matrix,
    displacement: &Matrix,
) -> Result<SegmentFit> {
    if positions.rows() != masks.rows() || displacement.rows() != masks.rows() {
        return Err(Error::invalid("point flow loss row mismatch"));
    }
    if positions.cols() != 2 || displacement.cols() != 2 {
        return Err(Error::invalid(
            "point positions and displacements need two columns",
        ));
    }
    let emb = Matrix::from_fn(positions.rows(), EMBED_DIM, |p, i| {
        embed_point(positions[(p, 0)], positions[(p, 1)])[i]
    });
    Ok(fit_segments(&emb, masks, displacement))
}

/// Normalized positions at frame `t` and pixel displacements to `t + 1`.
pub(crate) fn pair_data(p: &TrajectoryMatrix, t: usize, grid: (usize, usize)) -> (Matrix, Matrix) {
    let n = p.num_tracks();
    let (sx, sy) = ((grid.1 - 1).max(1) as f64, (grid.0 - 1).max(1) as f64);
    let mut pos = Matrix::zeros(n, 2);
    let mut disp = Matrix::zeros(n, 2);
    for j in 0..n {
        let a = p.point(t, j);
        let b = p.point(t + 1, j);
        pos[(j, 0)] = a[0];
        pos[(j, 1)] = a[1];
        disp[(j, 0)] = (b[0] - a[0]) * sx;
        disp[(j, 1)] = (b[1] - a[1]) * sy;
    }
    (pos, disp)
}

/// Masks restricted to tracks visible at the reference frame.
pub(crate) fn reference_masks(a: &Matrix, p: &TrajectoryMatrix) -> Matrix {
    let w = p.reference_weights();
    let mut out = a.clone();
    for (n, &wn) in w.iter().enumerate() {
        if wn != 1.0 {
            out.row_mut(n).iter_mut().for_each(|v| *v *= wn);
        }
    }
    out
}

fn check_points(rows: usize, p: &TrajectoryMatrix) -> Result<()> {
    if rows != p.num_tracks() {
        return Err(Error::invalid(format!(
            "assignment has {rows} rows for {} tracks",
            p.num_tracks()
        )));
    }
    if p.frames() < 2 {
        return Err(Error::invalid("tracks-as-flow needs at least two frames"));
    }
    Ok(())
}

/// Tracks treated as flow: the point-mode flow loss of every adjacent frame
/// pair, summed.
pub fn tracks_as_flow_loss(
    a: &SoftAssignment,
    p: &TrajectoryMatrix,
    grid: (usize, usize),
) -> Result<f64> {
    check_points(a.rows(), p)?;
    let masks = reference_masks(a.weights(), p);
    let mut total = 0.0;
    for t in 0..p.frames() - 1 {
        let (pos, disp) = pair_data(p, t, grid);
        total += point_flow_loss(&masks, &pos, &disp)?.value;
    }
    Ok(total)
}

/// Value and logit gradient of [`tracks_as_flow_loss`].
pub fn tracks_as_flow_grad(
    logits: &Matrix,
    p: &TrajectoryMatrix,
    grid: (usize, usize),
) -> Result<(f64, Matrix)> {
    check_points(logits.rows(), p)?;
    let a = softmax_rows(logits);
    let w = p.reference_weights();
    let masks = reference_masks(&a, p);
    let mut value = 0.0;
    let mut g = Matrix::zeros(a.rows(), a.cols());
    for t in 0..p.frames() - 1 {
        let (pos, disp) = pair_data(p, t, grid);
        let fit = point_flow_loss(&masks, &pos, &disp)?;
        value += fit.value;
        g = g.add(&mask_gradient(&masks, &fit));
    }
    for (n, &wn) in w.iter().enumerate() {
        if wn != 1.0 {
            g.row_mut(n).iter_mut().for_each(|v| *v *= wn);
        }
    }
    Ok((value, softmax_backward(&a, &g)))
}

/// Point-mode flow loss against dense fields: each field `t` is sampled
/// bilinearly at the frame-`t` track positions and fit per segment. Returns
/// the summed value and the logit gradient.
pub fn sampled_flow_grad(
    logits: &Matrix,
    p: &TrajectoryMatrix,
    flows: &[Matrix],
    grid: (usize, usize),
) -> Result<(f64, Matrix)> {
    check_points(logits.rows(), p)?;
    let (h, w) = grid;
    if flows.len() + 1 > p.frames() {
        return Err(Error::invalid(format!(
            "{} flow fields for a {}-frame window",
            flows.len(),
            p.frames()
        )));
    }
    let a = softmax_rows(logits);
    let vis = p.reference_weights();
    let masks = reference_masks(&a, p);
    let (sx, sy) = ((w - 1).max(1) as f64, (h - 1).max(1) as f64);
    let n = p.num_tracks();
    let mut value = 0.0;
    let mut g = Matrix::zeros(a.rows(), a.cols());
    let mut sample = [0.0; 2];
    for (t, f) in flows.iter().enumerate() {
        check_dense(h * w, f, grid)?;
        let mut pos = Matrix::zeros(n, 2);
        let mut disp = Matrix::zeros(n, 2);
        for j in 0..n {
            let q = p.point(t, j);
            pos.row_mut(j).copy_from_slice(&q);
            super::temporal::bilinear(f, grid, q[0] * sx, q[1] * sy, &mut sample);
            disp.row_mut(j).copy_from_slice(&sample);
        }
        let fit = point_flow_loss(&masks, &pos, &disp)?;
        value += fit.value;
        g = g.add(&mask_gradient(&masks, &fit));
    }
    for (j, &wj) in vis.iter().enumerate() {
        if wj != 1.0 {
            g.row_mut(j).iter_mut().for_each(|v| *v *= wj);
        }
    }
    Ok((value, softmax_backward(&a, &g)))
}
