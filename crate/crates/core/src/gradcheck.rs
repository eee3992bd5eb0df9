//! Central-difference checks of the analytic loss gradients on seeded
//! random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::format_sig;
use crate::linalg::{singular_values, Matrix};
use crate::losses::{
    flow_loss, flow_loss_grad, softmax_rows, traj_loss_lt, traj_loss_lt_grad, AssignmentMode,
    SoftAssignment,
};
use crate::scene::TrajectoryMatrix;
use crate::seed::derive;

pub const TOLERANCE: f64 = 1e-4;
/// Instances whose singular values are closer than this fraction of
/// `σ₁` are skipped: the tail sum is not differentiable at a tie.
pub const MIN_GAP: f64 = 1e-3;
const TRAJ_STEP: f64 = 1e-6;
const FLOW_STEP: f64 = 1e-5;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub seed: u64,
    pub frames: usize,
    pub tracks: usize,
    pub segments: usize,
    pub r: usize,
    /// `(H, W)` of the flow instances.
    pub grid: (usize, usize),
    /// Append one trajectory instance with repeated singular values.
    pub degenerate: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            instances: 50,
            seed: 0,
            frames: 6,
            tracks: 30,
            segments: 3,
            r: 5,
            grid: (8, 8),
            degenerate: false,
        }
    }
}

impl GradcheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.segments == 0 || self.frames < 1 {
            return Err(Error::invalid(
                "instances, segments and frames must be positive",
            ));
        }
        if self.r < 1 || self.r > 2 * self.frames {
            return Err(Error::range(
                "r",
                self.r,
                format!("1..={}", 2 * self.frames),
            ));
        }
        if self.tracks < 2 * self.frames {
            return Err(Error::invalid("tracks must be at least 2 * frames"));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::invalid("flow grid must be at least 2x2"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Outcome {
    Checked { rel_error: f64 },
    Skipped { reason: String },
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Check {
    pub loss: String,
    pub instance: usize,
    pub outcome: Outcome,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub checks: Vec<Check>,
    pub tolerance: f64,
}

impl GradcheckReport {
    /// Largest checked relative error for `loss`, `None` if nothing was
    /// checked.
    pub fn max_error(&self, loss: &str) -> Option<f64> {
        self.checks
            .iter()
            .filter(|c| c.loss == loss)
            .filter_map(|c| match c.outcome {
                Outcome::Checked { rel_error } => Some(rel_error),
                Outcome::Skipped { .. } => None,
            })
            .reduce(f64::max)
    }

    pub fn skipped(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| matches!(c.outcome, Outcome::Skipped { .. }))
            .count()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| match c.outcome {
            Outcome::Checked { rel_error } => rel_error < self.tolerance,
            Outcome::Skipped { .. } => true,
        })
    }

    pub fn losses(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for c in &self.checks {
            if !names.contains(&c.loss) {
                names.push(c.loss.clone());
            }
        }
        names
    }

    /// One line per check, then one summary line per loss.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            match &c.outcome {
                Outcome::Checked { rel_error } => out.push_str(&format!(
                    "{} {} rel_error {}\n",
                    c.loss,
                    c.instance,
                    format_sig(*rel_error, 3)
                )),
                Outcome::Skipped { reason } => {
                    out.push_str(&format!("{} {} skipped: {reason}\n", c.loss, c.instance))
                }
            }
        }
        for loss in self.losses() {
            let n = self.checks.iter().filter(|c| c.loss == loss).count();
            let max = self
                .max_error(&loss)
                .map_or("none".to_string(), |e| format_sig(e, 3));
            out.push_str(&format!("{loss}: max rel_error {max} over {n} instances\n"));
        }
        out.push_str(if self.passed() { "PASS\n" } else { "FAIL\n" });
        out
    }
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        std * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Central differences of `f` at every entry of `z`.
pub fn finite_differences(
    z: &Matrix,
    h: f64,
    f: impl Fn(&Matrix) -> Result<f64>,
) -> Result<Matrix> {
    let mut g = Matrix::zeros(z.rows(), z.cols());
    let mut probe = z.clone();
    for i in 0..z.rows() {
        for j in 0..z.cols() {
            let x = z[(i, j)];
            probe[(i, j)] = x + h;
            let up = f(&probe)?;
            probe[(i, j)] = x - h;
            let down = f(&probe)?;
            probe[(i, j)] = x;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    Ok(g)
}

pub fn relative_error(analytic: &Matrix, numeric: &Matrix) -> f64 {
    analytic.sub(numeric).frobenius_norm() / numeric.frobenius_norm().max(1e-300)
}

/// Smallest gap between consecutive singular values of every masked block,
/// relative to that block's `σ₁`.
pub fn min_relative_gap(a: &Matrix, p: &TrajectoryMatrix) -> Result<f64> {
    let vis = p.reference_weights();
    let mut worst = f64::INFINITY;
    for k in 0..a.cols() {
        let w: Vec<f64> = (0..a.rows()).map(|n| a[(n, k)] * vis[n]).collect();
        let s = singular_values(&p.positions().scale_columns(&w))?;
        if s[0] == 0.0 {
            continue;
        }
        for pair in s.windows(2) {
            worst = worst.min((pair[0] - pair[1]) / s[0]);
        }
    }
    Ok(worst)
}

fn check_tail(p: &TrajectoryMatrix, z: &Matrix, r: usize) -> Result<Outcome> {
    let gap = min_relative_gap(&softmax_rows(z), p)?;
    if gap <= MIN_GAP {
        return Ok(Outcome::Skipped {
            reason: format!(
                "singular-value gap {} <= {MIN_GAP} sigma_1",
                format_sig(gap, 3)
            ),
        });
    }
    let analytic = traj_loss_lt_grad(z, p, r)?;
    let numeric = finite_differences(z, TRAJ_STEP, |z| traj_loss_lt(&softmax_rows(z), p, r))?;
    Ok(Outcome::Checked {
        rel_error: relative_error(&analytic, &numeric),
    })
}

fn check_flow(flow: &Matrix, z: &Matrix, grid: (usize, usize)) -> Result<Outcome> {
    let analytic = flow_loss_grad(z, flow, grid)?;
    let numeric = finite_differences(z, FLOW_STEP, |z| {
        Ok(flow_loss(
            &SoftAssignment::from_logits(z, AssignmentMode::Pixel),
            flow,
            grid,
        )?
        .value)
    })?;
    Ok(Outcome::Checked {
        rel_error: relative_error(&analytic, &numeric),
    })
}

/// `traj_loss_lt` and `flow_loss` gradient checks; instance `i` draws from
/// `derive(seed, [i])`.
pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.validate()?;
    let mut checks = Vec::new();
    for i in 0..cfg.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[i as u64]));
        let p =
            TrajectoryMatrix::from_positions(gaussian(2 * cfg.frames, cfg.tracks, 1.0, &mut rng))?;
        let z = gaussian(cfg.tracks, cfg.segments, 1.0, &mut rng);
        checks.push(Check {
            loss: "traj_loss_lt".into(),
            instance: i,
            outcome: check_tail(&p, &z, cfg.r)?,
        });
        let (h, w) = cfg.grid;
        let flow = gaussian(h * w, 2, 1.0, &mut rng);
        let z = gaussian(h * w, cfg.segments, 1.0, &mut rng);
        checks.push(Check {
            loss: "flow_loss".into(),
            instance: i,
            outcome: check_flow(&flow, &z, cfg.grid)?,
        });
    }
    if cfg.degenerate {
        // Orthonormal rows and a uniform assignment: every singular value
        // of every block equals 1/K.
        let p = TrajectoryMatrix::from_positions(Matrix::from_fn(
            2 * cfg.frames,
            cfg.tracks,
            |i, j| {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            },
        ))?;
        let z = Matrix::zeros(cfg.tracks, cfg.segments);
        checks.push(Check {
            loss: "traj_loss_lt".into(),
            instance: cfg.instances,
            outcome: check_tail(&p, &z, cfg.r)?,
        });
    }
    Ok(GradcheckReport {
        checks,
        tolerance: TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes_and_degenerate_is_skipped() {
        let cfg = GradcheckConfig {
            instances: 3,
            degenerate: true,
            ..Default::default()
        };
        let rep = run(&cfg).unwrap();
        assert!(rep.passed(), "{}", rep.to_text());
        assert_eq!(rep.skipped(), 1);
        assert!(matches!(
            rep.checks.last().unwrap().outcome,
            Outcome::Skipped { .. }
        ));
        assert_eq!(rep.to_text(), run(&cfg).unwrap().to_text());
    }

    #[test]
    fn finite_differences_of_a_quadratic() {
        let z = Matrix::from_rows(&[[1.0, -2.0]]);
        let g =
            finite_differences(&z, 1e-4, |z| Ok(z[(0, 0)] * z[(0, 0)] + 3.0 * z[(0, 1)])).unwrap();
        assert!((g[(0, 0)] - 2.0).abs() < 1e-8 && (g[(0, 1)] - 3.0).abs() < 1e-8);
    }
}
