//! Mask corruptions and loss-landscape sweeps: pixel noise, merging objects
//! into the background or splitting them, and softening by temperature.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::sig9;
use crate::linalg::Matrix;
use crate::losses::{
    softmax_rows, traj_loss_segments, AssignmentMode, SoftAssignment, TrajLossKind, DEFAULT_RANK,
};
use crate::scene::{LabelGrid, TrajectoryMatrix};
use crate::seed::derive;

/// Classes drawn from by the noise corruption and carried by the softened
/// masks.
pub const NUM_CLASSES: usize = 20;
/// Logit scale of the one-hot labels before the temperature is applied.
pub const LOGIT_SCALE: f64 = 10.0;
pub const DEFAULT_TRIALS: usize = 25;
pub const SPLIT_ATTEMPTS: usize = 8;
pub const SWEEP_HEADER: &str = "eta,s,tau,trials,loss_mean,loss_std,loss_mean_per_track";

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    pub eta: f64,
    /// Negative: objects merged into the background; positive: objects split.
    pub s: i64,
    pub tau: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self, objects: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid(format!(
                "eta must be in [0, 1], got {}",
                self.eta
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.s.unsigned_abs() as usize > objects {
            return Err(Error::invalid(format!(
                "|s| = {} exceeds the {objects} objects",
                self.s.abs()
            )));
        }
        Ok(())
    }
}

/// Resamples each pixel uniformly from `0..classes` with probability `eta`.
pub fn corrupt_noise(
    masks: &[LabelGrid],
    eta: f64,
    classes: usize,
    seed: u64,
) -> Result<Vec<LabelGrid>> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::invalid(format!("eta must be in [0, 1], got {eta}")));
    }
    if classes == 0 {
        return Err(Error::invalid("noise needs at least one class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(masks
        .iter()
        .map(|m| {
            let mut out = m.clone();
            if eta > 0.0 {
                for l in out.as_mut_slice() {
                    if rng.random_bool(eta) {
                        *l = rng.random_range(0..classes);
                    }
                }
            }
            out
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Structural {
    pub masks: Vec<LabelGrid>,
    /// Objects that could not be split, with the reason.
    pub skipped: Vec<String>,
}

/// Distinct non-background labels.
pub fn objects_of(masks: &[LabelGrid]) -> Vec<usize> {
    let mut labels: Vec<usize> = masks
        .iter()
        .flat_map(|m| m.as_slice().iter().copied())
        .filter(|&l| l != 0)
        .collect();
    labels.sort_unstable();
    labels.dedup();
    labels
}

/// Pixels of `label` whose coordinate along `axis` (0 = x, 1 = y) lies
/// beyond the label's centroid.
fn far_side(mask: &LabelGrid, label: usize, axis: usize) -> (Vec<usize>, usize) {
    let w = mask.width();
    let idx: Vec<usize> = (0..mask.as_slice().len())
        .filter(|&i| mask.as_slice()[i] == label)
        .collect();
    if idx.is_empty() {
        return (Vec::new(), 0);
    }
    let coord = |i: usize| {
        if axis == 0 {
            (i % w) as f64
        } else {
            (i / w) as f64
        }
    };
    let c = idx.iter().map(|&i| coord(i)).sum::<f64>() / idx.len() as f64;
    let far: Vec<usize> = idx.iter().copied().filter(|&i| coord(i) > c).collect();
    let total = idx.len();
    (far, total)
}

/// `s < 0`: `|s|` random objects become background. `s > 0`: `s` random
/// objects are each cut in two along an x- or y-parallel axis through their
/// centroid, the far side taking a fresh label. The same objects and axis
/// are used in every frame.
pub fn corrupt_structural(masks: &[LabelGrid], s: i64, seed: u64) -> Result<Structural> {
    let objects = objects_of(masks);
    if s.unsigned_abs() as usize > objects.len() {
        return Err(Error::invalid(format!(
            "|s| = {} exceeds the {} objects",
            s.abs(),
            objects.len()
        )));
    }
    let mut out = masks.to_vec();
    let mut skipped = Vec::new();
    if s == 0 {
        return Ok(Structural {
            masks: out,
            skipped,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = objects.clone();
    chosen.shuffle(&mut rng);
    chosen.truncate(s.unsigned_abs() as usize);
    if s < 0 {
        for m in &mut out {
            for l in m.as_mut_slice() {
                if chosen.contains(l) {
                    *l = 0;
                }
            }
        }
        return Ok(Structural {
            masks: out,
            skipped,
        });
    }
    let mut next = masks.iter().map(LabelGrid::max_label).max().unwrap_or(0) + 1;
    for &obj in &chosen {
        let mut split = None;
        for _ in 0..SPLIT_ATTEMPTS {
            let axis = rng.random_range(0..2usize);
            let sides: Vec<(Vec<usize>, usize)> =
                out.iter().map(|m| far_side(m, obj, axis)).collect();
            // Every frame showing the object must have both halves non-empty.
            if sides
                .iter()
                .all(|(far, total)| *total == 0 || (!far.is_empty() && far.len() < *total))
            {
                split = Some(sides);
                break;
            }
        }
        match split {
            Some(sides) => {
                for (m, (far, _)) in out.iter_mut().zip(sides) {
                    let px = m.as_mut_slice();
                    for i in far {
                        px[i] = next;
                    }
                }
                next += 1;
            }
            None => skipped.push(format!(
                "object {obj}: no axis gives two non-empty halves in {SPLIT_ATTEMPTS} attempts"
            )),
        }
    }
    Ok(Structural {
        masks: out,
        skipped,
    })
}

/// `softmax(c · onehot(label) / tau)` over `classes` segments, `c = 10`.
pub fn soften(
    labels: &[usize],
    classes: usize,
    tau: f64,
    mode: AssignmentMode,
) -> Result<SoftAssignment> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::invalid(format!(
            "label {l} at row {i} is not below {classes} classes"
        )));
    }
    let logits = Matrix::from_fn(labels.len(), classes, |i, k| {
        if labels[i] == k {
            LOGIT_SCALE / tau
        } else {
            0.0
        }
    });
    Ok(SoftAssignment::from_logits(&logits, mode))
}

/// Pixel-mode soft masks of one label grid.
pub fn corrupt_temperature(mask: &LabelGrid, classes: usize, tau: f64) -> Result<SoftAssignment> {
    soften(mask.as_slice(), classes, tau, AssignmentMode::Pixel)
}

/// Nearest-pixel labels at each track's reference-frame position.
pub fn labels_at_tracks(mask: &LabelGrid, p: &TrajectoryMatrix) -> Vec<usize> {
    let t = p.reference_frame();
    (0..p.num_tracks())
        .map(|n| {
            let [x, y] = p.point(t, n);
            mask.at_normalized(x, y)
        })
        .collect()
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub eta: Vec<f64>,
    pub s: Vec<i64>,
    pub tau: Vec<f64>,
    pub trials: usize,
    pub loss: TrajLossKind,
    pub r: usize,
    pub seed: u64,
}

impl SweepGrid {
    /// `η ∈ {0, .25, .5, .75, 1}`, `s ∈ -objects..=objects`,
    /// `τ ∈ {0.01, 1, 5, 20}`, 25 trials, tail loss at `r = 5`.
    pub fn standard(objects: usize, seed: u64) -> Self {
        let m = objects as i64;
        SweepGrid {
            eta: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            s: (-m..=m).collect(),
            tau: vec![0.01, 1.0, 5.0, 20.0],
            trials: DEFAULT_TRIALS,
            loss: TrajLossKind::Tail,
            r: DEFAULT_RANK,
            seed,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub eta: f64,
    pub s: i64,
    pub tau: f64,
    pub trials: usize,
    pub loss_mean: f64,
    /// Population standard deviation over trials.
    pub loss_std: f64,
    /// `loss_mean` divided by the number of tracks visible at the
    /// reference frame.
    pub loss_mean_per_track: f64,
    pub skipped_splits: usize,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sig9(c.eta),
                c.s,
                sig9(c.tau),
                c.trials,
                sig9(c.loss_mean),
                sig9(c.loss_std),
                sig9(c.loss_mean_per_track)
            ));
        }
        out
    }

    pub fn cell(&self, eta: f64, s: i64, tau: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.eta == eta && c.s == s && c.tau == tau)
    }
}

/// The mask of the frame the trajectories are anchored at.
pub fn reference_mask<'a>(p: &TrajectoryMatrix, masks: &'a [LabelGrid]) -> Result<&'a LabelGrid> {
    let frame = p.source_frames()[p.reference_frame()];
    masks
        .get(frame)
        .ok_or_else(|| Error::invalid(format!("no mask for reference frame {frame}")))
}

/// Loss of one corruption of the reference-frame mask, and the number of
/// splits that had to be skipped.
pub fn corrupted_loss(
    p: &TrajectoryMatrix,
    mask: &LabelGrid,
    spec: &CorruptionSpec,
    loss: TrajLossKind,
    r: usize,
) -> Result<(f64, usize)> {
    let mask = std::slice::from_ref(mask);
    spec.validate(objects_of(mask).len())?;
    let structural = corrupt_structural(mask, spec.s, derive(spec.seed, &[0]))?;
    let noisy = corrupt_noise(
        &structural.masks,
        spec.eta,
        NUM_CLASSES,
        derive(spec.seed, &[1]),
    )?;
    let labels = labels_at_tracks(&noisy[0], p);
    let classes = NUM_CLASSES.max(labels.iter().copied().max().unwrap_or(0) + 1);
    let a = soften(&labels, classes, spec.tau, AssignmentMode::Point)?;
    let value = traj_loss_segments(a.weights(), p, loss, r)?.iter().sum();
    Ok((value, structural.skipped.len()))
}

/// Runs `trials` corruptions per `(eta, s, tau)` cell of the
/// reference-frame mask, trial `i` of cell `c` seeded with
/// `derive(seed, [c, i])`. Cells are ordered eta-major, then s, then tau.
pub fn sweep(p: &TrajectoryMatrix, masks: &[LabelGrid], grid: &SweepGrid) -> Result<SweepResult> {
    if grid.trials == 0 || grid.eta.is_empty() || grid.s.is_empty() || grid.tau.is_empty() {
        return Err(Error::invalid(
            "sweep grid needs at least one value per axis and one trial",
        ));
    }
    let mask = reference_mask(p, masks)?;
    let visible = p.reference_weights().iter().sum::<f64>();
    let mut cells = Vec::new();
    let mut index = 0u64;
    for &eta in &grid.eta {
        for &s in &grid.s {
            for &tau in &grid.tau {
                let mut values = Vec::with_capacity(grid.trials);
                let mut skipped = 0;
                for trial in 0..grid.trials {
                    let spec = CorruptionSpec {
                        eta,
                        s,
                        tau,
                        seed: derive(grid.seed, &[index, trial as u64]),
                    };
                    let (v, sk) = corrupted_loss(p, mask, &spec, grid.loss, grid.r)?;
                    values.push(v);
                    skipped += sk;
                }
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                cells.push(SweepCell {
                    eta,
                    s,
                    tau,
                    trials: grid.trials,
                    loss_mean: mean,
                    loss_std: var.sqrt(),
                    loss_mean_per_track: if visible > 0.0 { mean / visible } else { 0.0 },
                    skipped_splits: skipped,
                });
                index += 1;
            }
        }
    }
    Ok(SweepResult { cells })
}

/// Relative slack for "minimum at truth": ties within `1e-10 · max` count,
/// since splits of an affine rigid object are exactly free.
pub const MINIMUM_TIE: f64 = 1e-10;
/// Extreme cells along eta and tau must differ by this fraction of the
/// sweep's dynamic range.
pub const EXTREME_MARGIN: f64 = 0.05;

/// Landscape properties asserted over a sweep. Each is read along the
/// least-corrupted slice: `s = 0` and the smallest eta and tau present.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeChecks {
    /// Strictly increasing along eta.
    pub eta_monotone: bool,
    /// Non-decreasing along tau.
    pub tau_monotone: bool,
    /// `loss(s = -m) > loss(s = +m)` for every `m` present.
    pub asymmetry: bool,
    pub minimum_at_truth: bool,
}

impl Default for LandscapeChecks {
    fn default() -> Self {
        LandscapeChecks {
            eta_monotone: true,
            tau_monotone: true,
            asymmetry: true,
            minimum_at_truth: true,
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Violated properties, each naming the offending cells. Empty when all
/// enabled checks pass.
pub fn check_landscape(result: &SweepResult, checks: &LandscapeChecks) -> Vec<String> {
    let etas = sorted(&result.cells.iter().map(|c| c.eta).collect::<Vec<_>>());
    let taus = sorted(&result.cells.iter().map(|c| c.tau).collect::<Vec<_>>());
    let (Some(&eta0), Some(&tau0)) = (etas.first(), taus.first()) else {
        return vec!["sweep has no cells".into()];
    };
    let mut out = Vec::new();
    let name = |(eta, s, tau): (f64, i64, f64)| format!("(eta={eta}, s={s}, tau={tau})");
    let at = |eta: f64, s: i64, tau: f64, out: &mut Vec<String>| match result.cell(eta, s, tau) {
        Some(c) => Some(c.loss_mean),
        None => {
            out.push(format!("missing cell {}", name((eta, s, tau))));
            None
        }
    };
    let lo = result
        .cells
        .iter()
        .map(|c| c.loss_mean)
        .fold(f64::INFINITY, f64::min);
    let hi = result
        .cells
        .iter()
        .map(|c| c.loss_mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = EXTREME_MARGIN * (hi - lo);
    let axis = |values: &[f64],
                strict: bool,
                cell: &dyn Fn(f64) -> (f64, i64, f64),
                out: &mut Vec<String>| {
        let losses: Vec<Option<f64>> = values
            .iter()
            .map(|&v| {
                let (e, s, t) = cell(v);
                at(e, s, t, out)
            })
            .collect();
        for (i, w) in losses.windows(2).enumerate() {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                if (strict && b <= a) || b < a {
                    out.push(format!(
                        "{} loss {} not {} {} loss {}",
                        name(cell(values[i + 1])),
                        sig9(b),
                        if strict { ">" } else { ">=" },
                        name(cell(values[i])),
                        sig9(a)
                    ));
                }
            }
        }
        if let (Some(Some(a)), Some(Some(b))) = (losses.first(), losses.last()) {
            if values.len() > 1 && b - a <= margin {
                out.push(format!(
                    "extreme cells {} and {} differ by {}, not more than {}",
                    name(cell(values[0])),
                    name(cell(values[values.len() - 1])),
                    sig9(b - a),
                    sig9(margin)
                ));
            }
        }
    };
    if checks.eta_monotone {
        axis(&etas, true, &|e| (e, 0, tau0), &mut out);
    }
    if checks.tau_monotone {
        axis(&taus, false, &|t| (eta0, 0, t), &mut out);
    }
    if checks.asymmetry {
        let max_m = result.cells.iter().map(|c| c.s.abs()).max().unwrap_or(0);
        for m in 1..=max_m {
            if let (Some(under), Some(over)) =
                (result.cell(eta0, -m, tau0), result.cell(eta0, m, tau0))
            {
                if under.loss_mean <= over.loss_mean {
                    out.push(format!(
                        "{} loss {} not > {} loss {}",
                        name((eta0, -m, tau0)),
                        sig9(under.loss_mean),
                        name((eta0, m, tau0)),
                        sig9(over.loss_mean)
                    ));
                }
            }
        }
    }
    if checks.minimum_at_truth {
        if let Some(truth) = at(eta0, 0, tau0, &mut out) {
            if truth > lo + MINIMUM_TIE * hi.abs() {
                let arg = result
                    .cells
                    .iter()
                    .find(|c| c.loss_mean == lo)
                    .expect("minimum exists");
                out.push(format!(
                    "uncorrupted cell {} loss {} above minimum {} loss {}",
                    name((eta0, 0, tau0)),
                    sig9(truth),
                    name((arg.eta, arg.s, arg.tau)),
                    sig9(lo)
                ));
            }
        }
    }
    out
}

/// Softmax of `c · onehot / tau` for a single label, for hand checks.
pub fn on_label_probability(classes: usize, tau: f64) -> f64 {
    let row = Matrix::from_fn(
        1,
        classes,
        |_, k| if k == 0 { LOGIT_SCALE / tau } else { 0.0 },
    );
    softmax_rows(&row)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask() -> LabelGrid {
        let mut m = LabelGrid::filled(10, 10, 0);
        for r in 2..8 {
            for c in 2..7 {
                m.set(r, c, 1);
            }
        }
        m
    }

    #[test]
    fn noise_extremes() {
        let m = vec![square_mask()];
        assert_eq!(corrupt_noise(&m, 0.0, 20, 1).unwrap(), m);
        assert!(corrupt_noise(&m, 1.5, 20, 1).is_err());
    }

    #[test]
    fn split_square_halves() {
        let m = vec![square_mask()];
        for seed in 0..10 {
            let out = corrupt_structural(&m, 1, seed).unwrap();
            assert!(out.skipped.is_empty());
            let px = out.masks[0].as_slice();
            let a = px.iter().filter(|&&l| l == 1).count();
            let b = px.iter().filter(|&&l| l == 2).count();
            assert_eq!(a + b, 30);
            // 6 rows x 5 columns: a column cut leaves 3 | 2 columns, a row cut 3 | 3 rows.
            assert!(a.abs_diff(b) <= 6, "{a} {b}");
            for (i, &l) in px.iter().enumerate() {
                assert_eq!(l != 0, m[0].as_slice()[i] != 0);
            }
        }
    }

    #[test]
    fn merge_all_gives_background() {
        let mut m = square_mask();
        m.set(9, 9, 2);
        let out = corrupt_structural(&[m], -2, 0).unwrap();
        assert!(out.masks[0].as_slice().iter().all(|&l| l == 0));
        assert!(corrupt_structural(&[square_mask()], 2, 0).is_err());
    }

    #[test]
    fn one_pixel_object_is_skipped() {
        let mut m = LabelGrid::filled(4, 4, 0);
        m.set(1, 1, 1);
        let out = corrupt_structural(&[m.clone()], 1, 3).unwrap();
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.masks[0], m);
    }

    #[test]
    fn temperature_values() {
        assert!((on_label_probability(4, 10.0) - 0.4754).abs() < 5e-5);
        let a = soften(&[2, 0], 4, 1e-3, AssignmentMode::Point).unwrap();
        assert!((a.weights()[(0, 2)] - 1.0).abs() < 1e-3 && a.weights()[(1, 1)] < 1e-3);
        let u = soften(&[2, 0], 4, 1e6, AssignmentMode::Point).unwrap();
        assert!(u
            .weights()
            .as_slice()
            .iter()
            .all(|v| (v - 0.25).abs() < 1e-4));
    }
}
