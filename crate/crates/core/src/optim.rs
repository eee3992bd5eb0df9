//! Per-sequence optimization of point assignment logits with Adam.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::sig9;
use crate::linalg::Matrix;
use crate::losses::{
    sampled_flow_grad, traj_loss_grad, AssignmentMode, LossWeights, SoftAssignment, TrajLossKind,
};
use crate::scene::TrajectoryMatrix;

pub const TRACE_HEADER: &str = "step,loss_total,l_f,l_t,l_tau";
pub const LABELS_HEADER: &str = "track_id,label";
const INIT_STD: f64 = 0.01;
const CONVERGENCE_WINDOW: usize = 100;
const CONVERGENCE_TOL: f64 = 1e-7;

/// Frames `center - half_width ..= center + half_width`, reflected at the
/// sequence ends.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct FrameWindow {
    pub center: usize,
    pub half_width: usize,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    /// Number of segments.
    pub k: usize,
    pub steps: usize,
    pub r: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub weights: LossWeights,
    /// Loss in the trajectory slot; `per` is not offered here.
    pub traj_loss: TrajLossKind,
    /// Stop as soon as the convergence test passes.
    pub stop_on_convergence: bool,
    /// Optimize one window instead of the whole sequence.
    pub window: Option<FrameWindow>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            k: 25,
            steps: 5000,
            r: crate::losses::DEFAULT_RANK,
            step_size: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            weights: LossWeights::default(),
            traj_loss: TrajLossKind::Tail,
            stop_on_convergence: false,
            window: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::range("k", self.k, ">= 2"));
        }
        if self.steps < 1 {
            return Err(Error::range("steps", self.steps, ">= 1"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite())
            || !(self.epsilon > 0.0 && self.epsilon.is_finite())
        {
            return Err(Error::invalid(
                "step_size and epsilon must be positive and finite",
            ));
        }
        if self.traj_loss == TrajLossKind::Per {
            return Err(Error::invalid("traj_loss must be tail or rec"));
        }
        let w = &self.weights;
        if ![w.lambda_f, w.lambda_t, w.lambda_tau]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
        {
            return Err(Error::invalid("loss weights must be finite and >= 0"));
        }
        if let Some(win) = self.window {
            if win.half_width < 1 {
                return Err(Error::range("window half_width", win.half_width, ">= 1"));
            }
        }
        Ok(())
    }
}

/// Dense flow fields between consecutive frames, `HW x 2` pixel
/// displacements each.
#[derive(Clone, Copy, Debug)]
pub struct FlowFields<'a> {
    pub fields: &'a [Matrix],
    /// `(H, W)`.
    pub grid: (usize, usize),
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct StepLoss {
    pub total: f64,
    pub l_f: f64,
    pub l_t: f64,
    /// Always 0: point assignments carry no dense masks to match.
    pub l_tau: f64,
}

#[derive(Clone, Debug)]
pub struct OptimTrace {
    /// Losses at the logits each update started from.
    pub losses: Vec<StepLoss>,
    pub logits: Matrix,
    pub wall_time: Duration,
    /// Relative change of the total over the last 100 steps below `1e-7`.
    pub converged: bool,
}

impl OptimTrace {
    /// CSV `step,loss_total,l_f,l_t,l_tau`. Wall time is left out so reruns
    /// are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for (s, l) in self.losses.iter().enumerate() {
            out.push_str(&format!(
                "{s},{},{},{},{}\n",
                sig9(l.total),
                sig9(l.l_f),
                sig9(l.l_t),
                sig9(l.l_tau)
            ));
        }
        out
    }

    pub fn totals(&self) -> Vec<f64> {
        self.losses.iter().map(|l| l.total).collect()
    }
}

/// Argmax per row, ties toward the lowest segment.
pub fn hard_labels(a: &SoftAssignment) -> Vec<usize> {
    a.hard_labels()
}

/// CSV `track_id,label`.
pub fn labels_csv(labels: &[usize]) -> String {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    out
}

fn converged(totals: &[f64]) -> bool {
    let n = totals.len();
    if n <= CONVERGENCE_WINDOW {
        return false;
    }
    let (prev, last) = (totals[n - 1 - CONVERGENCE_WINDOW], totals[n - 1]);
    (last - prev).abs() <= CONVERGENCE_TOL * prev.abs()
}

/// Loss and logit gradient of the optimized objective
/// `λ_t L_traj + λ_f L_flow` (the temporal term vanishes for points).
pub fn objective(
    logits: &Matrix,
    p: &TrajectoryMatrix,
    flows: Option<FlowFields<'_>>,
    cfg: &OptimConfig,
) -> Result<(StepLoss, Matrix)> {
    let w = cfg.weights;
    let (l_t, mut g) = traj_loss_grad(logits, p, cfg.traj_loss, cfg.r)?;
    g = g.scale(w.lambda_t);
    let mut l_f = 0.0;
    if let Some(f) = flows {
        let (v, gf) = sampled_flow_grad(logits, p, f.fields, f.grid)?;
        l_f = v;
        g = g.add(&gf.scale(w.lambda_f));
    }
    let step = StepLoss {
        total: w.lambda_t * l_t + w.lambda_f * l_f,
        l_f,
        l_t,
        l_tau: 0.0,
    };
    Ok((step, g))
}

/// Optimizes `N x K` logits from a seeded `N(0, 0.01²)` start with Adam and
/// returns the softmaxed assignment. Deterministic for a given seed.
pub fn optimize_sequence(
    p: &TrajectoryMatrix,
    flows: Option<FlowFields<'_>>,
    cfg: &OptimConfig,
) -> Result<(SoftAssignment, OptimTrace)> {
    cfg.validate()?;
    let windowed;
    let p = match cfg.window {
        Some(win) => {
            if flows.is_some() {
                return Err(Error::invalid(
                    "a frame window cannot be combined with dense flow",
                ));
            }
            windowed = p.window(win.center, win.half_width)?;
            &windowed
        }
        None => p,
    };
    let n = p.num_tracks();
    if n < cfg.k {
        return Err(Error::invalid(format!(
            "need N >= K, got N = {n}, K = {}",
            cfg.k
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut logits = Matrix::from_fn(n, cfg.k, |_, _| {
        INIT_STD * rng.sample::<f64, _>(StandardNormal)
    });
    let mut m = Matrix::zeros(n, cfg.k);
    let mut v = Matrix::zeros(n, cfg.k);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut totals = Vec::with_capacity(cfg.steps);
    let (mut b1t, mut b2t) = (1.0, 1.0);
    for step in 0..cfg.steps {
        let (loss, g) = objective(&logits, p, flows, cfg)?;
        totals.push(loss.total);
        if !loss.total.is_finite() || !g.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                trace: totals,
            });
        }
        losses.push(loss);
        if cfg.stop_on_convergence && converged(&totals) {
            break;
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        let (c1, c2) = (1.0 - b1t, 1.0 - b2t);
        let grads = g.as_slice();
        let ms = m.as_mut_slice();
        let vs = v.as_mut_slice();
        for ((x, gi), (mi, vi)) in logits
            .as_mut_slice()
            .iter_mut()
            .zip(grads)
            .zip(ms.iter_mut().zip(vs.iter_mut()))
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            *x -= cfg.step_size * (*mi / c1) / ((*vi / c2).sqrt() + cfg.epsilon);
        }
    }
    let assignment = SoftAssignment::from_logits(&logits, AssignmentMode::Point);
    let trace = OptimTrace {
        converged: converged(&totals),
        losses,
        logits,
        wall_time: start.elapsed(),
    };
    Ok((assignment, trace))
}
