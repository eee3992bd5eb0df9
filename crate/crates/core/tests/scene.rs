use lrtl::linalg::{singular_values, svd, tail_singular_sum, truncate, Matrix};
use lrtl::scene::{
    load_scene, make_scene, write_scene, MotionModel, SceneConfig, SceneMode, SceneTruth,
};
use lrtl::Error;

fn scene(mode: SceneMode, k: usize, frames: usize, seed: u64) -> SceneTruth {
    let mut cfg = SceneConfig::new(mode, k, frames, (48, 48));
    cfg.motion_seed = seed;
    make_scene(&cfg).unwrap()
}

fn numerical_rank(a: &Matrix, rel: f64) -> usize {
    let s = singular_values(a).unwrap();
    s.iter().filter(|&&v| v > rel * s[0]).count()
}

fn group(s: &SceneTruth, label: usize) -> Matrix {
    s.trajectories
        .positions()
        .select_columns(&s.groups()[label])
}

/// Positions of a 4-vector under each frame's projection, stacked `2T x 1`.
fn project_track(s: &SceneTruth, label: usize, x: &[f64]) -> Vec<f64> {
    let g = &s.geometry[label];
    let mut out = Vec::new();
    for w in &g.projections {
        let h: Vec<f64> = (0..3)
            .map(|i| (0..4).map(|j| w[(i, j)] * x[j]).sum())
            .collect();
        out.push(h[0] / h[2]);
        out.push(h[1] / h[2]);
    }
    out
}

#[test]
fn interior_tracks_are_affine_combinations_of_vertex_tracks() {
    let s = scene(SceneMode::Planar2d, 1, 3, 11);
    let g = &s.geometry[1];
    let outline = g.outline.as_ref().unwrap();
    let vertex: Vec<Vec<f64>> = (0..3)
        .map(|v| project_track(&s, 1, &outline.column(v)))
        .collect();
    let vmat = Matrix::from_fn(6, 3, |i, j| vertex[j][i]);

    let p = group(&s, 1);
    let (a, b, c) = (&vertex[0], &vertex[1], &vertex[2]);
    for n in 0..p.cols() {
        // Barycentric coordinates at frame 0 by Cramer's rule.
        let (x, y) = (p[(0, n)], p[(1, n)]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((x - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (y - a[1]) - (x - a[0]) * (b[1] - a[1])) / det;
        let l0 = 1.0 - l1 - l2;
        for r in 0..6 {
            let want = l0 * a[r] + l1 * b[r] + l2 * c[r];
            assert!((p[(r, n)] - want).abs() < 1e-12, "track {n} row {r}");
        }
    }

    let base = numerical_rank(&vmat, 1e-10);
    let mut joined = Matrix::zeros(6, 3 + p.cols());
    for i in 0..6 {
        for j in 0..3 {
            joined[(i, j)] = vmat[(i, j)];
        }
        for j in 0..p.cols() {
            joined[(i, 3 + j)] = p[(i, j)];
        }
    }
    assert_eq!(base, 3);
    assert_eq!(numerical_rank(&joined, 1e-10), base);
}

#[test]
fn affine_rigid_object_has_rank_at_most_four() {
    for seed in 0..5 {
        let s = scene(SceneMode::Rigid3dAffine, 1, 12, seed);
        let p = group(&s, 1);
        let s1 = singular_values(&p).unwrap()[0];
        assert!(tail_singular_sum(&p, 5).unwrap() < 1e-8 * s1);
    }
}

#[test]
fn factorization_reproduces_every_track() {
    for mode in [
        SceneMode::Planar2d,
        SceneMode::Rigid3dAffine,
        SceneMode::Rigid3dPerspective,
    ] {
        let s = scene(mode, 2, 6, 3);
        for g in &s.geometry {
            for (j, &n) in g.tracks.iter().enumerate() {
                let want = project_track(&s, g.label, &g.points.column(j));
                for t in 0..s.frames() {
                    let [x, y] = s.trajectories.point(t, n);
                    assert!((x - want[2 * t]).abs() < 1e-12 && (y - want[2 * t + 1]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn constant_depth_perspective_lifts_to_exact_rank_four() {
    let mut cfg = SceneConfig::new(SceneMode::Rigid3dPerspective, 2, 10, (48, 48));
    cfg.motion_seed = 5;
    cfg.constant_depth = true;
    let s = make_scene(&cfg).unwrap();
    for g in &s.geometry[1..] {
        let nk = g.tracks.len();
        for j in 0..nk {
            for t in 1..s.frames() {
                assert!((g.depths[(t, j)] - g.depths[(0, j)]).abs() < 1e-12);
            }
        }
        // Homogeneous tracks, 3T x N_k.
        let lifted = Matrix::from_fn(3 * s.frames(), nk, |r, j| match r % 3 {
            2 => 1.0,
            c => s.trajectories.point(r / 3, g.tracks[j])[c],
        });
        let mut residual: f64 = 0.0;
        for t in 0..s.frames() {
            let w = &g.projections[t];
            for j in 0..nk {
                for i in 0..3 {
                    let v: f64 = (0..4).map(|m| w[(i, m)] * g.points[(m, j)]).sum::<f64>()
                        / g.depths[(0, j)];
                    residual = residual.max((v - lifted[(3 * t + i, j)]).abs());
                }
            }
        }
        assert!(residual < 1e-8, "factorization residual {residual}");
        let f = svd(&lifted).unwrap();
        let trunc = truncate(&f, 4).unwrap();
        assert!(lifted.sub(&trunc).frobenius_norm() < 1e-8);
    }
}

#[test]
fn varying_depth_perspective_is_not_exactly_rank_four() {
    let s = scene(SceneMode::Rigid3dPerspective, 1, 12, 2);
    let p = group(&s, 1);
    let sv = singular_values(&p).unwrap();
    assert!(sv[4] / sv[0] > 1e-7);
}

#[test]
fn static_scene_has_zero_flow() {
    for mode in [
        SceneMode::Planar2d,
        SceneMode::Rigid3dAffine,
        SceneMode::Rigid3dPerspective,
    ] {
        let mut cfg = SceneConfig::new(mode, 2, 4, (32, 32));
        cfg.object_motion = 0.0;
        cfg.camera_motion = 0.0;
        let s = make_scene(&cfg).unwrap();
        for t in 0..3 {
            assert!(
                s.flow_field(t).unwrap().max_abs() < 1e-9,
                "{mode:?} frame {t}"
            );
        }
    }
}

#[test]
fn translating_objects_have_constant_flow() {
    let mut cfg = SceneConfig::new(SceneMode::Planar2d, 2, 5, (40, 40));
    cfg.motion_model = MotionModel::Translation;
    cfg.motion_seed = 8;
    let s = make_scene(&cfg).unwrap();
    let groups = s.groups();
    for t in 0..4 {
        let flow = s.flow_field(t).unwrap();
        for (label, members) in groups.iter().enumerate() {
            let n = members[0];
            let d = [
                s.clean_pixels[(2 * t + 2, n)] - s.clean_pixels[(2 * t, n)],
                s.clean_pixels[(2 * t + 3, n)] - s.clean_pixels[(2 * t + 1, n)],
            ];
            let mut pixels = 0;
            for (i, &l) in s.masks[t].as_slice().iter().enumerate() {
                if l == label {
                    pixels += 1;
                    assert!(
                        (flow[(i, 0)] - d[0]).abs() < 1e-9 && (flow[(i, 1)] - d[1]).abs() < 1e-9
                    );
                }
            }
            assert!(pixels > 0);
        }
    }
}

/// Three tracks spanning a large triangle at frame `t`.
fn spread_triple(s: &SceneTruth, members: &[usize], t: usize) -> [usize; 3] {
    let at = |n: usize| [s.clean_pixels[(2 * t, n)], s.clean_pixels[(2 * t + 1, n)]];
    let a = members[0];
    let far = |from: &dyn Fn(usize) -> f64| {
        *members
            .iter()
            .max_by(|&&p, &&q| from(p).total_cmp(&from(q)))
            .unwrap()
    };
    let b = far(&|n| {
        let (p, q) = (at(a), at(n));
        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)
    });
    let c = far(&|n| {
        let (p, q, r) = (at(a), at(b), at(n));
        ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1])).abs()
    });
    [a, b, c]
}

/// Frame-to-frame affine map fitted exactly through three tracks.
fn affine_from_tracks(s: &SceneTruth, ids: [usize; 3], t: usize) -> [[f64; 3]; 2] {
    let src = |n: usize| [s.clean_pixels[(2 * t, n)], s.clean_pixels[(2 * t + 1, n)]];
    let dst = |n: usize| {
        [
            s.clean_pixels[(2 * t + 2, n)],
            s.clean_pixels[(2 * t + 3, n)],
        ]
    };
    let m = [src(ids[0]), src(ids[1]), src(ids[2])];
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let base = [
        [m[0][0], m[0][1], 1.0],
        [m[1][0], m[1][1], 1.0],
        [m[2][0], m[2][1], 1.0],
    ];
    let d = det3(base);
    let mut out = [[0.0; 3]; 2];
    for (c, row) in out.iter_mut().enumerate() {
        let rhs = [dst(ids[0])[c], dst(ids[1])[c], dst(ids[2])[c]];
        for (k, v) in row.iter_mut().enumerate() {
            let mut a = base;
            for r in 0..3 {
                a[r][k] = rhs[r];
            }
            *v = det3(a) / d;
        }
    }
    out
}

#[test]
fn planar_flow_matches_generating_affine_map() {
    let s = scene(SceneMode::Planar2d, 3, 6, 21);
    let groups = s.groups();
    let w = s.width();
    let mut checked = 0;
    for t in 0..5 {
        let flow = s.flow_field(t).unwrap();
        for (label, members) in groups.iter().enumerate() {
            let ids = spread_triple(&s, members, t);
            let a = affine_from_tracks(&s, ids, t);
            let pix: Vec<usize> = (0..s.masks[t].as_slice().len())
                .filter(|&i| s.masks[t].as_slice()[i] == label)
                .collect();
            for &i in pix.iter().step_by((pix.len() / 7).max(1)).take(7) {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                let u = a[0][0] * x + a[0][1] * y + a[0][2] - x;
                let v = a[1][0] * x + a[1][1] * y + a[1][2] - y;
                assert!(
                    (flow[(i, 0)] - u).abs() < 1e-8 && (flow[(i, 1)] - v).abs() < 1e-8,
                    "t={t} label={label} i={i} flow=({}, {}) want=({u}, {v})",
                    flow[(i, 0)],
                    flow[(i, 1)]
                );
                checked += 1;
            }
        }
    }
    assert!(checked >= 100);
}

#[test]
fn flow_frame_is_range_checked() {
    let s = scene(SceneMode::Planar2d, 1, 3, 0);
    assert!(matches!(s.flow_field(2), Err(Error::Range { .. })));
}

#[test]
fn visible_tracks_lie_inside_their_masks() {
    for mode in [
        SceneMode::Planar2d,
        SceneMode::Rigid3dAffine,
        SceneMode::Rigid3dPerspective,
    ] {
        let s = scene(mode, 3, 8, 4);
        let (h, w) = (s.height(), s.width());
        for t in 0..s.frames() {
            for n in 0..s.trajectories.num_tracks() {
                let x = s.clean_pixels[(2 * t, n)];
                let y = s.clean_pixels[(2 * t + 1, n)];
                let inside = x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
                if s.trajectories.is_visible(t, n) {
                    assert!(inside);
                    assert_eq!(s.masks[t].at_pixel(x, y), Some(s.labels()[n]));
                } else if inside {
                    assert_ne!(s.masks[t].at_pixel(x, y), Some(s.labels()[n]));
                }
            }
        }
        // Every track is visible where it was sampled.
        assert!((0..s.trajectories.num_tracks()).all(|n| s.trajectories.is_visible(0, n)));
    }
}

#[test]
fn generation_is_deterministic() {
    let a = scene(SceneMode::Rigid3dPerspective, 3, 6, 9);
    let b = scene(SceneMode::Rigid3dPerspective, 3, 6, 9);
    assert_eq!(a.trajectories, b.trajectories);
    assert_eq!(a.masks, b.masks);
    assert_eq!(a.flows, b.flows);
    let c = scene(SceneMode::Rigid3dPerspective, 3, 6, 10);
    assert_ne!(a.trajectories, c.trajectories);
}

#[test]
fn independent_motions_raise_rank() {
    for seed in 0..4 {
        let mut cfg = SceneConfig::new(SceneMode::Rigid3dAffine, 3, 16, (64, 64));
        cfg.motion_seed = seed;
        let s = make_scene(&cfg).unwrap();
        let sv = singular_values(s.trajectories.positions()).unwrap();
        assert!(sv[4] / sv[0] > 1e-3, "seed {seed}: {}", sv[4] / sv[0]);

        let groups = s.groups();
        let (pa, pb) = (group(&s, 1), group(&s, 2));
        let union: Vec<usize> = groups[1].iter().chain(&groups[2]).copied().collect();
        let pab = s.trajectories.positions().select_columns(&union);
        let s1 = singular_values(&pab).unwrap()[0];
        let merged = tail_singular_sum(&pab, 5).unwrap();
        let apart = tail_singular_sum(&pa, 5).unwrap() + tail_singular_sum(&pb, 5).unwrap();
        assert!(merged > apart + 1e-3 * s1, "seed {seed}");
    }
}

#[test]
fn noise_has_requested_pixel_std() {
    let mut cfg = SceneConfig::new(SceneMode::Rigid3dAffine, 2, 10, (48, 64));
    cfg.noise_sigma = 1.0;
    let s = make_scene(&cfg).unwrap();
    let p = s.trajectories.positions();
    let mut sq = 0.0;
    let mut count = 0.0;
    for r in 0..p.rows() {
        let scale = if r % 2 == 0 { 63.0 } else { 47.0 };
        for n in 0..p.cols() {
            let d = p[(r, n)] * scale - s.clean_pixels[(r, n)];
            sq += d * d;
            count += 1.0;
        }
    }
    let std = (sq / count).sqrt();
    assert!((std - 1.0).abs() < 0.05, "std {std}");
}

#[test]
fn window_reflects_at_start() {
    let s = scene(SceneMode::Planar2d, 1, 5, 0);
    let w = s.window(0, 2).unwrap();
    assert_eq!(w.source_frames(), &[2, 1, 0, 1, 2]);
    assert_eq!(w.positions().rows(), 10);
    assert_eq!(w.labels(), s.trajectories.labels());
}

#[test]
fn invalid_configs_are_rejected() {
    let base = SceneConfig::new(SceneMode::Planar2d, 2, 4, (32, 32));
    let mut c = base.clone();
    c.frames = 1;
    assert!(make_scene(&c).is_err());
    let mut c = base.clone();
    c.grid = (7, 32);
    assert!(make_scene(&c).is_err());
    let mut c = base.clone();
    c.num_objects = 0;
    assert!(make_scene(&c).is_err());
    let mut c = base;
    c.noise_sigma = -1.0;
    assert!(make_scene(&c).is_err());

    let json = r#"{"mode":"planar2d","num_objects":2,"frames":4,"grid":[32,32],
                   "points_per_object":20,"motion_seed":1,"colour":3}"#;
    let err = serde_json::from_str::<SceneConfig>(json)
        .unwrap_err()
        .to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn crowded_layouts_are_regenerated_or_reported() {
    let mut cfg = SceneConfig::new(SceneMode::Planar2d, 9, 4, (16, 16));
    cfg.points_per_object = 4;
    match make_scene(&cfg) {
        Err(Error::Degenerate(msg)) => assert!(msg.contains("attempts")),
        Ok(s) => assert_eq!(s.metadata.regenerations, s.metadata.rejections.len()),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn scene_files_round_trip() {
    let s = scene(SceneMode::Rigid3dAffine, 2, 5, 6);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_scene(&s, dir.path()).unwrap();
    assert_eq!(manifest.tracks, s.trajectories.num_tracks());

    let text = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + manifest.tracks * manifest.frames);
    assert_eq!(
        text.lines().next(),
        Some("track_id,frame,x,y,visible,label")
    );

    let loaded = load_scene(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.masks, s.masks);
    assert_eq!(loaded.trajectories.labels(), s.trajectories.labels());
    assert_eq!(
        loaded.trajectories.visibility(),
        s.trajectories.visibility()
    );
    let dp = loaded
        .trajectories
        .positions()
        .sub(s.trajectories.positions())
        .max_abs();
    assert!(dp < 1e-8);
    assert_eq!(loaded.flows.len(), 4);
    for (a, b) in loaded.flows.iter().zip(&s.flows) {
        assert!(a.sub(b).max_abs() < 1e-8 * b.max_abs().max(1.0));
    }

    let again = tempfile::tempdir().unwrap();
    write_scene(&s, again.path()).unwrap();
    for rel in [
        "manifest.json",
        "trajectories.csv",
        "masks/mask_0003.csv",
        "flows/flow_0002.csv",
    ] {
        let a = std::fs::read(dir.path().join(rel)).unwrap();
        let b = std::fs::read(again.path().join(rel)).unwrap();
        assert_eq!(a, b, "{rel}");
    }
}

#[test]
fn loading_reports_missing_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_scene(dir.path()), Err(Error::Io { .. })));

    let s = scene(SceneMode::Planar2d, 1, 3, 1);
    write_scene(&s, dir.path()).unwrap();
    let p = dir.path().join("trajectories.csv");
    let text = std::fs::read_to_string(&p).unwrap();
    std::fs::write(&p, text.replacen("track_id", "track", 1)).unwrap();
    assert!(matches!(load_scene(dir.path()), Err(Error::Format { .. })));
}
