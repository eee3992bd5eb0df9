//! Synthetic scenes with exact ground truth: tracks, masks, flow and the
//! projective factorization behind every trajectory.

pub mod geometry;
mod io;
mod synth;
mod trajectory;

pub use io::{load_scene, write_scene, LoadedScene, SceneManifest};
pub use trajectory::{reflect, LabelGrid, TrajectoryMatrix};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, Matrix};

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    /// Convex polygons under time-varying affine maps.
    Planar2d,
    /// Rigid 3D surfaces under orthographic projection.
    Rigid3dAffine,
    /// Rigid 3D surfaces under a pinhole camera.
    Rigid3dPerspective,
}

impl SceneMode {
    pub fn name(self) -> &'static str {
        match self {
            SceneMode::Planar2d => "planar2d",
            SceneMode::Rigid3dAffine => "rigid3d_affine",
            SceneMode::Rigid3dPerspective => "rigid3d_perspective",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    /// Rotation, translation and (planar mode) mild linear distortion.
    #[default]
    General,
    /// Constant-velocity translation only.
    Translation,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub mode: SceneMode,
    pub num_objects: usize,
    pub frames: usize,
    /// `(H, W)` in pixels.
    pub grid: (usize, usize),
    pub points_per_object: usize,
    pub motion_seed: u64,
    /// Tracking noise std in pixels.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Background (camera) motion amplitude; 0 keeps the background still.
    #[serde(default = "one")]
    pub camera_motion: f64,
    /// Object motion amplitude; 0 keeps objects still.
    #[serde(default = "one")]
    pub object_motion: f64,
    #[serde(default)]
    pub motion_model: MotionModel,
    /// Rigid modes only: restrict motion to rotation about the optical axis
    /// and translation parallel to the image plane, so every point keeps
    /// its depth.
    #[serde(default)]
    pub constant_depth: bool,
}

fn one() -> f64 {
    1.0
}

impl SceneConfig {
    pub fn new(mode: SceneMode, num_objects: usize, frames: usize, grid: (usize, usize)) -> Self {
        SceneConfig {
            mode,
            num_objects,
            frames,
            grid,
            points_per_object: 60,
            motion_seed: 0,
            noise_sigma: 0.0,
            camera_motion: 1.0,
            object_motion: 1.0,
            motion_model: MotionModel::General,
            constant_depth: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::invalid(format!(
                "frames must be >= 2, got {}",
                self.frames
            )));
        }
        if self.num_objects < 1 {
            return Err(Error::invalid("num_objects must be >= 1"));
        }
        if self.grid.0 < 8 || self.grid.1 < 8 {
            return Err(Error::invalid(format!(
                "grid must be at least 8x8, got {}x{}",
                self.grid.0, self.grid.1
            )));
        }
        if self.points_per_object < 1 {
            return Err(Error::invalid("points_per_object must be >= 1"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("camera_motion", self.camera_motion),
            ("object_motion", self.object_motion),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Exact factorization of one body's clean trajectories:
/// `[x; y; 1]` at frame `t` for track `n` equals
/// `projections[t] * points[:, n] / depths[(t, n)]` in normalized coordinates.
#[derive(Clone, Debug)]
pub struct ObjectGeometry {
    pub label: usize,
    /// Columns of the trajectory matrix owned by this body.
    pub tracks: Vec<usize>,
    /// `4 x N_k` homogeneous points.
    pub points: Matrix,
    /// One `3 x 4` projection per frame.
    pub projections: Vec<Matrix>,
    /// `T x N_k` projective depths.
    pub depths: Matrix,
    /// Planar objects: `4 x V` homogeneous polygon vertices, in the same
    /// frame as `points`.
    pub outline: Option<Matrix>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneMetadata {
    /// Layouts rejected (overlap, degenerate polygon, too few points)
    /// before the accepted one.
    pub regenerations: usize,
    /// Seed of the accepted layout.
    pub layout_seed: u64,
    pub rejections: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SceneTruth {
    pub config: SceneConfig,
    /// Normalized tracks with ground-truth labels (0 = background).
    pub trajectories: TrajectoryMatrix,
    /// Noise-free pixel positions, `2T x N`.
    pub clean_pixels: Matrix,
    pub masks: Vec<LabelGrid>,
    /// `T-1` fields of `HW x 2` pixel displacements, row-major pixels.
    pub flows: Vec<Matrix>,
    /// Background first, then objects `1..=K`.
    pub geometry: Vec<ObjectGeometry>,
    pub metadata: SceneMetadata,
}

impl SceneTruth {
    pub fn height(&self) -> usize {
        self.config.grid.0
    }

    pub fn width(&self) -> usize {
        self.config.grid.1
    }

    pub fn frames(&self) -> usize {
        self.config.frames
    }

    pub fn labels(&self) -> &[usize] {
        self.trajectories
            .labels()
            .expect("synthetic trajectories carry labels")
    }

    /// Column indices of each label `0..=K`.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut g = vec![Vec::new(); self.config.num_objects + 1];
        for (n, &l) in self.labels().iter().enumerate() {
            g[l].push(n);
        }
        g
    }

    /// Pixel displacements from frame `t` to `t + 1`.
    pub fn flow_field(&self, t: usize) -> Result<Matrix> {
        self.flows
            .get(t)
            .cloned()
            .ok_or_else(|| Error::range("flow frame", t, format!("0..{}", self.flows.len())))
    }

    pub fn window(&self, center: usize, f: usize) -> Result<TrajectoryMatrix> {
        self.trajectories.window(center, f)
    }

    /// `σ_r / σ₁` of each non-empty ground-truth group of the tracks, in
    /// label order. Zero when the group has fewer than `r` singular values.
    pub fn rank_ratios(&self, r: usize) -> Result<Vec<f64>> {
        if r == 0 {
            return Err(Error::range("r", r, ">= 1"));
        }
        let mut out = Vec::new();
        for idx in self.groups().iter().filter(|g| !g.is_empty()) {
            let s = singular_values(self.trajectories.select_tracks(idx).positions())?;
            out.push(if s.len() < r || s[0] == 0.0 {
                0.0
            } else {
                s[r - 1] / s[0]
            });
        }
        Ok(out)
    }
}

pub fn make_scene(cfg: &SceneConfig) -> Result<SceneTruth> {
    cfg.validate()?;
    synth::generate(cfg)
}

/// Convenience for free functions mirroring [`SceneTruth::flow_field`].
pub fn flow_field(scene: &SceneTruth, t: usize) -> Result<Matrix> {
    scene.flow_field(t)
}
