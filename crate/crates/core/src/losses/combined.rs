use serde::{Deserialize, Serialize};

use super::assignment::SoftAssignment;
use super::flow::flow_loss;
use super::temporal::temporal_smooth_loss;
use super::trajectory::{traj_loss_segments, TrajLossKind, PERSPECTIVE_RANK};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scene::TrajectoryMatrix;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    #[serde(default = "default_flow")]
    pub lambda_f: f64,
    #[serde(default = "default_traj")]
    pub lambda_t: f64,
    #[serde(default = "default_tau")]
    pub lambda_tau: f64,
}

fn default_flow() -> f64 {
    0.03
}

fn default_traj() -> f64 {
    5e-5
}

fn default_tau() -> f64 {
    0.1
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_f: default_flow(),
            lambda_t: default_traj(),
            lambda_tau: default_tau(),
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            lambda_f: 0.0,
            lambda_t: 0.0,
            lambda_tau: 0.0,
        }
    }

    /// `λ_f l_f + λ_t l_t + λ_τ l_τ`.
    pub fn combine(&self, l_f: f64, l_t: f64, l_tau: f64) -> f64 {
        self.lambda_f * l_f + self.lambda_t * l_t + self.lambda_tau * l_tau
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_f: f64,
    pub l_t: f64,
    pub l_rec: f64,
    pub l_per: f64,
    pub l_tau: f64,
    pub total: f64,
    pub r: usize,
    pub weights: LossWeights,
}

/// Masks for the frame pair `(t, t + dt)` of the temporal term.
#[derive(Clone, Copy, Debug)]
pub struct TemporalPair<'a> {
    pub later: &'a SoftAssignment,
    pub t: usize,
    pub dt: usize,
}

/// Pixel-mode inputs: masks at the reference frame, optionally the flow out
/// of it and masks at a later frame.
#[derive(Clone, Copy, Debug)]
pub struct DenseInputs<'a> {
    pub grid: (usize, usize),
    pub masks: &'a SoftAssignment,
    pub flow: Option<&'a Matrix>,
    pub temporal: Option<TemporalPair<'a>>,
}

/// Evaluates every term. `l_rec` and `l_per` are reported but not weighted.
pub fn combined_loss(
    a: &SoftAssignment,
    p: &TrajectoryMatrix,
    dense: Option<&DenseInputs>,
    weights: &LossWeights,
    r: usize,
) -> Result<LossBreakdown> {
    let w = a.weights();
    let l_t = traj_loss_segments(w, p, TrajLossKind::Tail, r)?
        .iter()
        .sum();
    let l_rec = traj_loss_segments(w, p, TrajLossKind::Rec, r)?.iter().sum();
    let l_per = traj_loss_segments(w, p, TrajLossKind::Per, PERSPECTIVE_RANK)?
        .iter()
        .sum();
    let (mut l_f, mut l_tau) = (0.0, 0.0);
    if let Some(d) = dense {
        if let Some(f) = d.flow {
            l_f = flow_loss(d.masks, f, d.grid)?.value;
        }
        if let Some(pair) = d.temporal {
            l_tau = temporal_smooth_loss(d.masks, pair.later, p, d.grid, pair.t, pair.dt)?.value;
        }
    }
    Ok(LossBreakdown {
        l_f,
        l_t,
        l_rec,
        l_per,
        l_tau,
        total: weights.combine(l_f, l_t, l_tau),
        r,
        weights: *weights,
    })
}
