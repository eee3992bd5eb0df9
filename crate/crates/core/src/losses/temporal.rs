//! Temporal smoothing: masks sampled at the same tracks in two frames should
//! agree.

use super::assignment::{AssignmentMode, SoftAssignment};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scene::TrajectoryMatrix;

pub const DEFAULT_DT: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalLoss {
    pub value: f64,
    /// Tracks visible at both frames.
    pub points: usize,
    /// Samples that fell outside the grid and were clamped to its border.
    pub clamped: usize,
}

/// Bilinear sample of every mask column at pixel coordinates `(x, y)`,
/// clamped to the grid. Returns whether clamping happened.
pub fn bilinear(masks: &Matrix, grid: (usize, usize), x: f64, y: f64, out: &mut [f64]) -> bool {
    let (h, w) = grid;
    let cx = x.clamp(0.0, (w - 1) as f64);
    let cy = y.clamp(0.0, (h - 1) as f64);
    let clamped = cx != x || cy != y;
    let (x0, y0) = (cx.floor() as usize, cy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (cx - x0 as f64, cy - y0 as f64);
    let corners = [
        (y0 * w + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * w + x1, fx * (1.0 - fy)),
        (y1 * w + x0, (1.0 - fx) * fy),
        (y1 * w + x1, fx * fy),
    ];
    out.iter_mut().for_each(|v| *v = 0.0);
    for (idx, wt) in corners {
        if wt == 0.0 {
            continue;
        }
        for (o, m) in out.iter_mut().zip(masks.row(idx)) {
            *o += wt * m;
        }
    }
    clamped
}

/// `Σ_n ‖π(M_t, p_n(t)) − π(M_{t+dt}, p_n(t+dt))‖²` over tracks visible at
/// both frames.
pub fn temporal_smooth_loss(
    m_t: &SoftAssignment,
    m_t2: &SoftAssignment,
    p: &TrajectoryMatrix,
    grid: (usize, usize),
    t: usize,
    dt: usize,
) -> Result<TemporalLoss> {
    if m_t.mode() != AssignmentMode::Pixel || m_t2.mode() != AssignmentMode::Pixel {
        return Err(Error::invalid("temporal smoothing needs pixel-mode masks"));
    }
    let (h, w) = grid;
    if h == 0 || w == 0 || m_t.rows() != h * w || m_t2.rows() != h * w {
        return Err(Error::invalid(format!(
            "mask rows do not match the {h}x{w} grid"
        )));
    }
    if m_t.segments() != m_t2.segments() {
        return Err(Error::invalid("masks have different segment counts"));
    }
    let t2 = t + dt;
    if t2 >= p.frames() {
        return Err(Error::range(
            "frame t + dt",
            t2,
            format!("0..{}", p.frames()),
        ));
    }
    let (sx, sy) = ((w - 1) as f64, (h - 1) as f64);
    let k = m_t.segments();
    let (mut a, mut b) = (vec![0.0; k], vec![0.0; k]);
    let mut out = TemporalLoss {
        value: 0.0,
        points: 0,
        clamped: 0,
    };
    for n in 0..p.num_tracks() {
        if !(p.is_visible(t, n) && p.is_visible(t2, n)) {
            continue;
        }
        let (pa, pb) = (p.point(t, n), p.point(t2, n));
        out.clamped += bilinear(m_t.weights(), grid, pa[0] * sx, pa[1] * sy, &mut a) as usize;
        out.clamped += bilinear(m_t2.weights(), grid, pb[0] * sx, pb[1] * sy, &mut b) as usize;
        out.value += a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        out.points += 1;
    }
    Ok(out)
}
