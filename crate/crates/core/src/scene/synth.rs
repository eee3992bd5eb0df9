use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::geometry::{
    convex_hull, in_convex_polygon, mat3_apply, mat3_inverse, mat3_mul, polygon_area, rotation,
    Affine2, Mat3, MAT3_IDENTITY,
};
use super::{
    LabelGrid, MotionModel, ObjectGeometry, SceneConfig, SceneMetadata, SceneMode, SceneTruth,
    TrajectoryMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::derive;

const MAX_ATTEMPTS: u64 = 64;
const MIN_OBJECT_TRACKS: usize = 8;
const NOISE_STREAM: u64 = 0x6e6f697365;
const Z_REF: f64 = 10.0;

/// `3 x 4` projection into pixel coordinates.
type Proj = [[f64; 4]; 3];

enum Shape {
    /// Convex outline as homogeneous vertices.
    Polygon(Vec<[f64; 4]>),
    /// Dense surface samples, one per covered pixel at frame 0.
    Surface {
        points: Vec<[f64; 4]>,
        pixels: Vec<(usize, usize)>,
    },
    Background,
}

struct Body {
    label: usize,
    proj: Vec<Proj>,
    shape: Shape,
    /// Homogeneous z shared by every point of a planar body.
    plane_z: Option<f64>,
}

struct Track {
    label: usize,
    point: [f64; 4],
    row: usize,
    col: usize,
}

struct Rejected(String);

pub(super) fn generate(cfg: &SceneConfig) -> Result<SceneTruth> {
    let mut rejections = Vec::new();
    for attempt in 0..MAX_ATTEMPTS {
        let seed = if attempt == 0 {
            cfg.motion_seed
        } else {
            derive(cfg.motion_seed, &[attempt])
        };
        match build(cfg, seed) {
            Ok(mut scene) => {
                scene.metadata = SceneMetadata {
                    regenerations: attempt as usize,
                    layout_seed: seed,
                    rejections,
                };
                return Ok(scene);
            }
            Err(Rejected(reason)) => rejections.push(reason),
        }
    }
    Err(Error::Degenerate(format!(
        "no valid layout after {MAX_ATTEMPTS} attempts; last rejection: {}",
        rejections.last().map(String::as_str).unwrap_or("none")
    )))
}

struct Camera {
    focal: f64,
    cx: f64,
    cy: f64,
    perspective: bool,
}

impl Camera {
    fn new(cfg: &SceneConfig) -> Self {
        let (h, w) = cfg.grid;
        Camera {
            focal: h.max(w) as f64,
            cx: (w - 1) as f64 / 2.0,
            cy: (h - 1) as f64 / 2.0,
            perspective: cfg.mode == SceneMode::Rigid3dPerspective,
        }
    }

    /// World point seen at pixel `(x, y)` with depth `z`.
    fn back_project(&self, x: f64, y: f64, z: f64) -> [f64; 4] {
        let s = if self.perspective {
            z / self.focal
        } else {
            Z_REF / self.focal
        };
        [(x - self.cx) * s, (y - self.cy) * s, z, 1.0]
    }

    /// Projection of the rigid pose `X -> R X + t`.
    fn projection(&self, r: &Mat3, t: [f64; 3]) -> Proj {
        let mut rt = [[0.0; 4]; 3];
        for i in 0..3 {
            rt[i][..3].copy_from_slice(&r[i]);
            rt[i][3] = t[i];
        }
        if self.perspective {
            let k = [
                [self.focal, 0.0, self.cx],
                [0.0, self.focal, self.cy],
                [0.0, 0.0, 1.0],
            ];
            let mut w = [[0.0; 4]; 3];
            for i in 0..3 {
                for j in 0..4 {
                    w[i][j] = (0..3).map(|m| k[i][m] * rt[m][j]).sum();
                }
            }
            w
        } else {
            let s = self.focal / Z_REF;
            let mut w = [[0.0; 4]; 3];
            for j in 0..4 {
                w[0][j] = s * rt[0][j];
                w[1][j] = s * rt[1][j];
            }
            w[0][3] += self.cx;
            w[1][3] += self.cy;
            w[2][3] = 1.0;
            w
        }
    }
}

fn project(w: &Proj, x: &[f64; 4]) -> ([f64; 2], f64) {
    let row = |i: usize| w[i][0] * x[0] + w[i][1] * x[1] + w[i][2] * x[2] + w[i][3] * x[3];
    let d = row(2);
    ([row(0) / d, row(1) / d], d)
}

fn affine_proj(a: &Affine2) -> Proj {
    [
        [a.a[0][0], a.a[0][1], 0.0, a.b[0]],
        [a.a[1][0], a.a[1][1], 0.0, a.b[1]],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Plane-induced homography of a planar body: maps `[X, Y, 1]` on the
/// plane `Z = z` to homogeneous pixels.
fn plane_map(w: &Proj, z: f64) -> Mat3 {
    let mut g = [[0.0; 3]; 3];
    for i in 0..3 {
        g[i] = [w[i][0], w[i][1], w[i][2] * z + w[i][3]];
    }
    g
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn planar_direction(rng: &mut ChaCha8Rng) -> [f64; 2] {
    let a = rng.random_range(0.0..2.0 * PI);
    [a.cos(), a.sin()]
}

/// Per-frame angular increments with a rate that varies over time.
fn rotation_rates(rng: &mut ChaCha8Rng, base: f64, frames: usize) -> Vec<f64> {
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..frames)
        .map(|s| base * (1.0 + 0.5 * (phase + 0.9 * s as f64).sin()))
        .collect()
}

struct Layout {
    anchors: Vec<[f64; 2]>,
    cell: f64,
}

fn layout(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Layout {
    let (h, w) = cfg.grid;
    let k = cfg.num_objects;
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    let (cw, ch) = (w as f64 / cols as f64, h as f64 / rows as f64);
    let mut cells: Vec<usize> = (0..rows * cols).collect();
    // Partial Fisher-Yates: the first k cells are a uniform choice.
    for i in 0..k {
        let j = rng.random_range(i..cells.len());
        cells.swap(i, j);
    }
    let anchors = cells[..k]
        .iter()
        .map(|&c| {
            let (r, q) = (c / cols, c % cols);
            [
                (q as f64 + 0.5 + rng.random_range(-0.05..0.05)) * cw - 0.5,
                (r as f64 + 0.5 + rng.random_range(-0.05..0.05)) * ch - 0.5,
            ]
        })
        .collect();
    Layout {
        anchors,
        cell: cw.min(ch),
    }
}

fn planar_object(
    cfg: &SceneConfig,
    label: usize,
    anchor: [f64; 2],
    cell: f64,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Body, Rejected> {
    let t_count = cfg.frames;
    let radius = 0.26 * cell;
    let n_v = rng.random_range(3..=6usize);
    let tilt = rng.random_range(0.0..2.0 * PI);
    let (ax, ay) = (
        radius * rng.random_range(0.75..1.0),
        radius * rng.random_range(0.6..1.0),
    );
    let base = rng.random_range(0.0..2.0 * PI);
    let (st, ct) = tilt.sin_cos();
    let vertices: Vec<[f64; 2]> = (0..n_v)
        .map(|i| {
            let a = base + 2.0 * PI * (i as f64 + rng.random_range(-0.3..0.3)) / n_v as f64;
            let (ex, ey) = (ax * a.cos(), ay * a.sin());
            [anchor[0] + ct * ex - st * ey, anchor[1] + st * ex + ct * ey]
        })
        .collect();
    if polygon_area(&vertices).abs() < 1.0 {
        return Err(Rejected(format!("object {label}: degenerate polygon")));
    }

    let amp = cfg.object_motion;
    let vmax = 0.25 * cell / (t_count - 1) as f64;
    let dir = planar_direction(rng);
    let speed = rng.random_range(0.3..1.0) * vmax * amp;
    let v = [dir[0] * speed, dir[1] * speed];
    let general = cfg.motion_model == MotionModel::General;
    let base = signed(rng, 0.05, 0.1) * amp;
    let rates = rotation_rates(rng, base, t_count);
    let (sa, sb) = (
        rng.random_range(-0.06..0.06) * amp,
        rng.random_range(-0.06..0.06) * amp,
    );
    let phase = rng.random_range(0.0..2.0 * PI);
    let mut theta = 0.0;
    let mut proj = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let tf = t as f64;
        let a = if general {
            let wob = (0.4 * tf + phase).sin() - phase.sin();
            let lin = [[1.0 + sa * wob, sb * wob], [0.0, 1.0 - sa * wob]];
            Affine2::about(anchor, theta, lin, [v[0] * tf, v[1] * tf])
        } else {
            Affine2::about(
                anchor,
                0.0,
                [[1.0, 0.0], [0.0, 1.0]],
                [v[0] * tf, v[1] * tf],
            )
        };
        proj.push(affine_proj(&a));
        theta += rates[t];
    }
    Ok(Body {
        label,
        proj,
        shape: Shape::Polygon(vertices.iter().map(|p| [p[0], p[1], 0.0, 1.0]).collect()),
        plane_z: Some(0.0),
    })
}

fn planar_background(cfg: &SceneConfig, rng: &mut ChaCha8Rng) -> Body {
    let (h, w) = cfg.grid;
    let center = [(w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0];
    let amp = cfg.camera_motion;
    let dir = planar_direction(rng);
    let v = [0.3 * amp * dir[0], 0.3 * amp * dir[1]];
    let base = signed(rng, 0.004, 0.008) * amp;
    let rates = rotation_rates(rng, base, cfg.frames);
    let zoom = signed(rng, 0.001, 0.003) * amp;
    let general = cfg.motion_model == MotionModel::General;
    let mut theta = 0.0;
    let mut proj = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let tf = t as f64;
        let a = if general {
            let s = 1.0 + zoom * tf;
            Affine2::about(center, theta, [[s, 0.0], [0.0, s]], [v[0] * tf, v[1] * tf])
        } else {
            Affine2::about(
                center,
                0.0,
                [[1.0, 0.0], [0.0, 1.0]],
                [v[0] * tf, v[1] * tf],
            )
        };
        proj.push(affine_proj(&a));
        theta += rates[t];
    }
    Body {
        label: 0,
        proj,
        shape: Shape::Background,
        plane_z: Some(0.0),
    }
}

struct RigidMotion {
    rates: Vec<f64>,
    axis: [f64; 3],
    wobble: f64,
    velocity: [f64; 3],
}

impl RigidMotion {
    fn poses(&self, centroid: [f64; 4], cam: &Camera, frames: usize) -> Vec<Proj> {
        let mut r = MAT3_IDENTITY;
        let c = [centroid[0], centroid[1], centroid[2]];
        let mut out = Vec::with_capacity(frames);
        for t in 0..frames {
            let tf = t as f64;
            let rc = mat3_apply(&r, c);
            let shift = [
                c[0] - rc[0] + self.velocity[0] * tf,
                c[1] - rc[1] + self.velocity[1] * tf,
                c[2] - rc[2] + self.velocity[2] * tf,
            ];
            out.push(cam.projection(&r, shift));
            let s = self.wobble * (0.7 * tf).sin();
            let mut axis = [self.axis[0] + s, self.axis[1] - s, self.axis[2]];
            let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            axis.iter_mut().for_each(|a| *a /= n);
            let step = rotation([
                axis[0] * self.rates[t],
                axis[1] * self.rates[t],
                axis[2] * self.rates[t],
            ]);
            r = mat3_mul(&step, &r);
        }
        out
    }
}

fn centroid(points: &[[f64; 4]]) -> [f64; 4] {
    let n = points.len() as f64;
    let mut c = [0.0, 0.0, 0.0, 1.0];
    for p in points {
        for i in 0..3 {
            c[i] += p[i] / n;
        }
    }
    c
}

fn rigid_object(
    cfg: &SceneConfig,
    cam: &Camera,
    label: usize,
    anchor: [f64; 2],
    cell: f64,
    rng: &mut ChaCha8Rng,
) -> Body {
    let (h, w) = cfg.grid;
    let radius = 0.24 * cell;
    let depth = if cam.perspective {
        Z_REF * rng.random_range(0.85..1.15)
    } else {
        Z_REF
    };
    let relief = rng.random_range(0.5..0.9);
    let (gx, gy) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    // World units per pixel at the object's depth.
    let unit = depth / cam.focal;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let (dx, dy) = (col as f64 - anchor[0], row as f64 - anchor[1]);
            let rho2 = (dx * dx + dy * dy) / (radius * radius);
            if rho2 > 1.0 {
                continue;
            }
            let z =
                depth - relief * radius * unit * (1.0 - rho2).sqrt() + (gx * dx + gy * dy) * unit;
            points.push(cam.back_project(col as f64, row as f64, z));
            pixels.push((row, col));
        }
    }

    let amp = cfg.object_motion;
    let general = cfg.motion_model == MotionModel::General;
    let axis = if cfg.constant_depth {
        [0.0, 0.0, 1.0]
    } else {
        unit_vector(rng)
    };
    let base_rate = signed(rng, 0.05, 0.1) * amp;
    let rates = rotation_rates(rng, if general { base_rate } else { 0.0 }, cfg.frames);
    let wobble = if cfg.constant_depth {
        0.0
    } else {
        rng.random_range(0.1..0.4)
    };
    let vmax = 0.2 * cell / (cfg.frames - 1) as f64;
    let dir = planar_direction(rng);
    let speed = rng.random_range(0.3..1.0) * vmax * amp * unit;
    let vz = if cam.perspective && !cfg.constant_depth {
        rng.random_range(-0.01..0.01) * depth * amp
    } else {
        0.0
    };
    let motion = RigidMotion {
        rates,
        axis,
        wobble,
        velocity: [dir[0] * speed, dir[1] * speed, vz],
    };
    let proj = motion.poses(centroid(&points), cam, cfg.frames);
    Body {
        label,
        proj,
        shape: Shape::Surface { points, pixels },
        plane_z: None,
    }
}

fn rigid_background(cfg: &SceneConfig, cam: &Camera, rng: &mut ChaCha8Rng) -> Body {
    let z = if cam.perspective {
        2.0 * Z_REF
    } else {
        1.5 * Z_REF
    };
    let amp = cfg.camera_motion;
    let axis = if cfg.constant_depth {
        [0.0, 0.0, 1.0]
    } else {
        let (a, b): (f64, f64) = (rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
        let n = (1.0 + a * a + b * b).sqrt();
        [a / n, b / n, 1.0 / n]
    };
    let general = cfg.motion_model == MotionModel::General;
    let base = if general {
        signed(rng, 0.004, 0.008) * amp
    } else {
        0.0
    };
    let rates = rotation_rates(rng, base, cfg.frames);
    let dir = planar_direction(rng);
    let unit = z / cam.focal;
    let vz = if cam.perspective && !cfg.constant_depth {
        rng.random_range(-0.003..0.003) * z * amp
    } else {
        0.0
    };
    let motion = RigidMotion {
        rates,
        axis,
        wobble: 0.0,
        velocity: [0.3 * amp * unit * dir[0], 0.3 * amp * unit * dir[1], vz],
    };
    let center = cam.back_project(cam.cx, cam.cy, z);
    Body {
        label: 0,
        proj: motion.poses(center, cam, cfg.frames),
        shape: Shape::Background,
        plane_z: Some(z),
    }
}

fn in_frame(p: [f64; 2], h: usize, w: usize) -> bool {
    p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= (w - 1) as f64 && p[1] <= (h - 1) as f64
}

fn nearest_pixel(p: [f64; 2], h: usize, w: usize) -> Option<(usize, usize)> {
    let (c, r) = (p[0].round(), p[1].round());
    if c < 0.0 || r < 0.0 || c >= w as f64 || r >= h as f64 {
        return None;
    }
    Some((r as usize, c as usize))
}

/// Pixels whose centers fall inside the convex hull of `outline`.
fn rasterize(outline: &[[f64; 2]], h: usize, w: usize, out: &mut Vec<(usize, usize)>) {
    let hull = convex_hull(outline);
    if hull.len() < 3 {
        return;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in &hull {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let c0 = x0.ceil().max(0.0) as usize;
    let r0 = y0.ceil().max(0.0) as usize;
    let c1 = (x1.floor().min((w - 1) as f64)).max(-1.0);
    let r1 = (y1.floor().min((h - 1) as f64)).max(-1.0);
    if c1 < 0.0 || r1 < 0.0 {
        return;
    }
    for row in r0..=r1 as usize {
        for col in c0..=c1 as usize {
            if in_convex_polygon(&hull, [col as f64, row as f64]) {
                out.push((row, col));
            }
        }
    }
}

/// Projected outline of a body at frame `t`, in pixels.
fn outline_at(body: &Body, t: usize) -> Vec<[f64; 2]> {
    match &body.shape {
        Shape::Polygon(v) => v.iter().map(|p| project(&body.proj[t], p).0).collect(),
        Shape::Surface { points, .. } => {
            points.iter().map(|p| project(&body.proj[t], p).0).collect()
        }
        Shape::Background => Vec::new(),
    }
}

fn stride_for(area: f64, target: usize) -> usize {
    ((area / target as f64).sqrt().round() as usize).max(1)
}

fn on_grid(row: usize, col: usize, stride: usize) -> bool {
    let off = stride / 2;
    row % stride == off % stride && col % stride == off % stride
}

fn build(cfg: &SceneConfig, seed: u64) -> std::result::Result<SceneTruth, Rejected> {
    let (h, w) = cfg.grid;
    let t_count = cfg.frames;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = Camera::new(cfg);
    let lay = layout(cfg, &mut rng);

    let mut bodies = Vec::with_capacity(cfg.num_objects + 1);
    bodies.push(match cfg.mode {
        SceneMode::Planar2d => planar_background(cfg, &mut rng),
        _ => rigid_background(cfg, &cam, &mut rng),
    });
    for (i, &anchor) in lay.anchors.iter().enumerate() {
        let body = match cfg.mode {
            SceneMode::Planar2d => planar_object(cfg, i + 1, anchor, lay.cell, &mut rng)?,
            _ => rigid_object(cfg, &cam, i + 1, anchor, lay.cell, &mut rng),
        };
        bodies.push(body);
    }

    // Frame-0 regions decide which grid pixels each object tracks.
    let mut regions0: Vec<Vec<(usize, usize)>> = vec![Vec::new(); bodies.len()];
    for body in &bodies[1..] {
        rasterize(&outline_at(body, 0), h, w, &mut regions0[body.label]);
    }
    let mean_area =
        regions0[1..].iter().map(|r| r.len() as f64).sum::<f64>() / cfg.num_objects as f64;
    let obj_stride = stride_for(mean_area, cfg.points_per_object);

    let mut tracks: Vec<Track> = Vec::new();
    let mut label0 = LabelGrid::filled(h, w, 0);
    for body in &bodies[1..] {
        for &(row, col) in &regions0[body.label] {
            if label0.get(row, col) != 0 {
                return Err(Rejected(format!(
                    "objects overlap at frame 0 pixel ({row}, {col})"
                )));
            }
            label0.set(row, col, body.label);
        }
        let mut count = 0;
        for &(row, col) in &regions0[body.label] {
            if !on_grid(row, col, obj_stride) {
                continue;
            }
            let point = match &body.shape {
                Shape::Surface { points, pixels } => {
                    match pixels.iter().position(|&p| p == (row, col)) {
                        Some(i) => points[i],
                        None => continue,
                    }
                }
                _ => [col as f64, row as f64, 0.0, 1.0],
            };
            tracks.push(Track {
                label: body.label,
                point,
                row,
                col,
            });
            count += 1;
        }
        if count < MIN_OBJECT_TRACKS {
            return Err(Rejected(format!(
                "object {} has only {count} tracks",
                body.label
            )));
        }
    }
    let bg_area = label0.as_slice().iter().filter(|&&l| l == 0).count();
    let bg_stride = stride_for(bg_area as f64, cfg.points_per_object);
    let bg = &bodies[0];
    for row in 0..h {
        for col in 0..w {
            if label0.get(row, col) == 0 && on_grid(row, col, bg_stride) {
                let point = match bg.plane_z {
                    Some(z) if cfg.mode != SceneMode::Planar2d => {
                        cam.back_project(col as f64, row as f64, z)
                    }
                    _ => [col as f64, row as f64, 0.0, 1.0],
                };
                tracks.push(Track {
                    label: 0,
                    point,
                    row,
                    col,
                });
            }
        }
    }
    if tracks.iter().filter(|t| t.label == 0).count() < MIN_OBJECT_TRACKS {
        return Err(Rejected("background has too few tracks".into()));
    }
    tracks.sort_by_key(|t| (t.row, t.col));
    let n = tracks.len();

    let mut clean = Matrix::zeros(2 * t_count, n);
    for (j, tr) in tracks.iter().enumerate() {
        for t in 0..t_count {
            let (p, d) = project(&bodies[tr.label].proj[t], &tr.point);
            if !(d > 1e-3) || !p[0].is_finite() || !p[1].is_finite() {
                return Err(Rejected(format!(
                    "track {j} has non-positive depth at frame {t}"
                )));
            }
            clean[(2 * t, j)] = p[0];
            clean[(2 * t + 1, j)] = p[1];
        }
    }

    let masks = paint_masks(cfg, &bodies, &tracks, &clean)?;

    let mut visible = vec![false; t_count * n];
    for t in 0..t_count {
        for (j, tr) in tracks.iter().enumerate() {
            let p = [clean[(2 * t, j)], clean[(2 * t + 1, j)]];
            visible[t * n + j] =
                in_frame(p, h, w) && masks[t].at_pixel(p[0], p[1]) == Some(tr.label);
        }
    }

    let mut noisy = clean.clone();
    if cfg.noise_sigma > 0.0 {
        let mut nrng = ChaCha8Rng::seed_from_u64(derive(seed, &[NOISE_STREAM]));
        for v in noisy.as_mut_slice() {
            let z: f64 = nrng.sample(StandardNormal);
            *v += cfg.noise_sigma * z;
        }
    }
    let (sx, sy) = (1.0 / (w - 1) as f64, 1.0 / (h - 1) as f64);
    for t in 0..t_count {
        noisy.row_mut(2 * t).iter_mut().for_each(|v| *v *= sx);
        noisy.row_mut(2 * t + 1).iter_mut().for_each(|v| *v *= sy);
    }
    let labels: Vec<usize> = tracks.iter().map(|t| t.label).collect();
    let trajectories = TrajectoryMatrix::new(noisy, visible, Some(labels))
        .map_err(|e| Rejected(format!("invalid trajectories: {e}")))?;

    let flows = (0..t_count - 1)
        .map(|t| flow_between(&bodies, &masks[t], t, h, w))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let norm = Matrix::from_diag(&[sx, sy, 1.0]);
    let geometry = bodies
        .iter()
        .map(|body| {
            let ids: Vec<usize> = (0..n).filter(|&j| tracks[j].label == body.label).collect();
            let points = Matrix::from_fn(4, ids.len(), |i, j| tracks[ids[j]].point[i]);
            let projections: Vec<Matrix> = body
                .proj
                .iter()
                .map(|p| norm.matmul(&Matrix::from_fn(3, 4, |i, j| p[i][j])))
                .collect();
            let depths = Matrix::from_fn(t_count, ids.len(), |t, j| {
                project(&body.proj[t], &tracks[ids[j]].point).1
            });
            let outline = match &body.shape {
                Shape::Polygon(v) => Some(Matrix::from_fn(4, v.len(), |i, j| v[j][i])),
                _ => None,
            };
            ObjectGeometry {
                label: body.label,
                tracks: ids,
                points,
                projections,
                depths,
                outline,
            }
        })
        .collect();

    Ok(SceneTruth {
        config: cfg.clone(),
        trajectories,
        clean_pixels: clean,
        masks,
        flows,
        geometry,
        metadata: SceneMetadata {
            regenerations: 0,
            layout_seed: seed,
            rejections: Vec::new(),
        },
    })
}

/// Objects are painted over the background: the convex region of the
/// projected outline plus the nearest pixel of each of the object's tracks.
fn paint_masks(
    cfg: &SceneConfig,
    bodies: &[Body],
    tracks: &[Track],
    clean: &Matrix,
) -> std::result::Result<Vec<LabelGrid>, Rejected> {
    let (h, w) = cfg.grid;
    let mut masks = Vec::with_capacity(cfg.frames);
    let mut pixels = Vec::new();
    for t in 0..cfg.frames {
        let mut grid = LabelGrid::filled(h, w, 0);
        for body in &bodies[1..] {
            pixels.clear();
            rasterize(&outline_at(body, t), h, w, &mut pixels);
            for (j, tr) in tracks.iter().enumerate() {
                if tr.label == body.label {
                    if let Some(px) =
                        nearest_pixel([clean[(2 * t, j)], clean[(2 * t + 1, j)]], h, w)
                    {
                        pixels.push(px);
                    }
                }
            }
            for &(row, col) in &pixels {
                let cur = grid.get(row, col);
                if cur != 0 && cur != body.label {
                    return Err(Rejected(format!(
                        "objects {cur} and {} overlap at frame {t}",
                        body.label
                    )));
                }
                grid.set(row, col, body.label);
            }
        }
        masks.push(grid);
    }
    Ok(masks)
}

/// Displacement of every pixel from frame `t` to `t + 1` under the motion
/// of the body that owns it. Planar bodies map through their plane-induced
/// homography; curved surfaces use the nearest dense surface sample.
fn flow_between(
    bodies: &[Body],
    mask: &LabelGrid,
    t: usize,
    h: usize,
    w: usize,
) -> std::result::Result<Matrix, Rejected> {
    let mut flow = Matrix::zeros(h * w, 2);
    for body in bodies {
        match (body.plane_z, &body.shape) {
            (Some(z), _) => {
                let g0 = plane_map(&body.proj[t], z);
                let g1 = plane_map(&body.proj[t + 1], z);
                let inv = mat3_inverse(&g0).ok_or_else(|| {
                    Rejected(format!("body {} plane is edge-on at frame {t}", body.label))
                })?;
                let hom = mat3_mul(&g1, &inv);
                for row in 0..h {
                    for col in 0..w {
                        if mask.get(row, col) != body.label {
                            continue;
                        }
                        let (x, y) = (col as f64, row as f64);
                        let q = mat3_apply(&hom, [x, y, 1.0]);
                        let i = row * w + col;
                        flow[(i, 0)] = q[0] / q[2] - x;
                        flow[(i, 1)] = q[1] / q[2] - y;
                    }
                }
            }
            (None, Shape::Surface { points, .. }) => {
                let now: Vec<[f64; 2]> =
                    points.iter().map(|p| project(&body.proj[t], p).0).collect();
                let next: Vec<[f64; 2]> = points
                    .iter()
                    .map(|p| project(&body.proj[t + 1], p).0)
                    .collect();
                for row in 0..h {
                    for col in 0..w {
                        if mask.get(row, col) != body.label {
                            continue;
                        }
                        let (x, y) = (col as f64, row as f64);
                        let mut best = (f64::INFINITY, 0);
                        for (i, p) in now.iter().enumerate() {
                            let d = (p[0] - x).powi(2) + (p[1] - y).powi(2);
                            if d < best.0 {
                                best = (d, i);
                            }
                        }
                        let i = row * w + col;
                        flow[(i, 0)] = next[best.1][0] - now[best.1][0];
                        flow[(i, 1)] = next[best.1][1] - now[best.1][1];
                    }
                }
            }
            (None, _) => unreachable!("only surfaces lack a plane"),
        }
    }
    Ok(flow)
}
