//! Scene directories: `manifest.json`, `trajectories.csv`,
//! `masks/mask_NNNN.csv` and `flows/flow_NNNN.csv`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelGrid, SceneConfig, SceneTruth, TrajectoryMatrix};
use crate::error::{Error, Result};
use crate::files::{create_dir, read_to_string, sig9, write_atomic};
use crate::linalg::Matrix;

pub const TRAJECTORY_HEADER: &str = "track_id,frame,x,y,visible,label";

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub config: SceneConfig,
    pub seed: u64,
    pub frames: usize,
    pub tracks: usize,
    pub height: usize,
    pub width: usize,
    pub num_objects: usize,
    pub regenerations: usize,
    pub layout_seed: u64,
}

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub trajectories: TrajectoryMatrix,
    pub masks: Vec<LabelGrid>,
    /// Empty when the directory holds no flow files.
    pub flows: Vec<Matrix>,
}

fn mask_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("masks").join(format!("mask_{t:04}.csv"))
}

fn flow_path(dir: &Path, t: usize) -> PathBuf {
    dir.join("flows").join(format!("flow_{t:04}.csv"))
}

pub fn trajectories_csv(tm: &TrajectoryMatrix) -> String {
    let mut out = String::with_capacity(40 * tm.frames() * tm.num_tracks());
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for n in 0..tm.num_tracks() {
        let label = tm.labels().map(|l| l[n]);
        for t in 0..tm.frames() {
            let [x, y] = tm.point(t, n);
            let _ = write!(
                out,
                "{n},{t},{},{},{},",
                sig9(x),
                sig9(y),
                u8::from(tm.is_visible(t, n))
            );
            if let Some(l) = label {
                let _ = write!(out, "{l}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn mask_csv(mask: &LabelGrid) -> String {
    let mut out = String::with_capacity(3 * mask.height() * mask.width());
    for row in 0..mask.height() {
        for col in 0..mask.width() {
            if col > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", mask.get(row, col));
        }
        out.push('\n');
    }
    out
}

pub fn flow_csv(flow: &Matrix, width: usize) -> String {
    let mut out = String::from("x,y,u,v\n");
    for i in 0..flow.rows() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i % width,
            i / width,
            sig9(flow[(i, 0)]),
            sig9(flow[(i, 1)])
        );
    }
    out
}

pub fn write_scene(scene: &SceneTruth, dir: &Path) -> Result<SceneManifest> {
    create_dir(&dir.join("masks"))?;
    create_dir(&dir.join("flows"))?;
    let manifest = SceneManifest {
        config: scene.config.clone(),
        seed: scene.config.motion_seed,
        frames: scene.frames(),
        tracks: scene.trajectories.num_tracks(),
        height: scene.height(),
        width: scene.width(),
        num_objects: scene.config.num_objects,
        regenerations: scene.metadata.regenerations,
        layout_seed: scene.metadata.layout_seed,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&dir.join("manifest.json"), json.as_bytes())?;
    write_atomic(
        &dir.join("trajectories.csv"),
        trajectories_csv(&scene.trajectories).as_bytes(),
    )?;
    for (t, m) in scene.masks.iter().enumerate() {
        write_atomic(&mask_path(dir, t), mask_csv(m).as_bytes())?;
    }
    for (t, f) in scene.flows.iter().enumerate() {
        write_atomic(&flow_path(dir, t), flow_csv(f, scene.width()).as_bytes())?;
    }
    Ok(manifest)
}

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, field: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| {
        format_err(
            path,
            format!("line {line}: cannot parse {field} from {s:?}"),
        )
    })
}

fn reader(path: &Path, has_headers: bool) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => format_err(path, format!("{other:?}")),
        })
}

/// Reads a `track_id,frame,x,y,visible,label` file. Labels are returned
/// only when every row carries one.
pub fn read_trajectories(path: &Path, frames: usize, tracks: usize) -> Result<TrajectoryMatrix> {
    let mut rdr = reader(path, true)?;
    let header = rdr
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != TRAJECTORY_HEADER {
        return Err(format_err(path, format!("unexpected header {header:?}")));
    }
    let mut pos = Matrix::zeros(2 * frames, tracks);
    let mut visible = vec![false; frames * tracks];
    let mut seen = vec![false; frames * tracks];
    let mut labels: Vec<Option<usize>> = vec![None; tracks];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        if rec.len() != 6 {
            return Err(format_err(path, format!("line {line}: expected 6 fields")));
        }
        let n: usize = parse(path, line, "track_id", &rec[0])?;
        let t: usize = parse(path, line, "frame", &rec[1])?;
        if n >= tracks || t >= frames {
            return Err(format_err(
                path,
                format!("line {line}: track {n} frame {t} out of range"),
            ));
        }
        if std::mem::replace(&mut seen[t * tracks + n], true) {
            return Err(format_err(
                path,
                format!("line {line}: duplicate track {n} frame {t}"),
            ));
        }
        pos[(2 * t, n)] = parse(path, line, "x", &rec[2])?;
        pos[(2 * t + 1, n)] = parse(path, line, "y", &rec[3])?;
        let v: u8 = parse(path, line, "visible", &rec[4])?;
        visible[t * tracks + n] = v != 0;
        if !rec[5].trim().is_empty() {
            labels[n] = Some(parse(path, line, "label", &rec[5])?);
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(format_err(
            path,
            format!(
                "missing track {} frame {}",
                missing % tracks,
                missing / tracks
            ),
        ));
    }
    let labels = labels.into_iter().collect::<Option<Vec<usize>>>();
    TrajectoryMatrix::new(pos, visible, labels).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_mask(path: &Path, height: usize, width: usize) -> Result<LabelGrid> {
    let text = read_to_string(path)?;
    let mut labels = Vec::with_capacity(height * width);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let before = labels.len();
        for field in line.split(',') {
            labels.push(parse(path, i + 1, "label", field)?);
        }
        if labels.len() - before != width {
            return Err(format_err(
                path,
                format!("line {}: expected {width} labels", i + 1),
            ));
        }
    }
    if rows != height {
        return Err(format_err(
            path,
            format!("expected {height} rows, found {rows}"),
        ));
    }
    LabelGrid::new(height, width, labels)
}

pub fn read_flow(path: &Path, height: usize, width: usize) -> Result<Matrix> {
    let mut rdr = reader(path, true)?;
    let mut flow = Matrix::zeros(height * width, 2);
    let mut count = 0;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| format_err(path, e.to_string()))?;
        if rec.len() != 4 {
            return Err(format_err(path, format!("line {line}: expected 4 fields")));
        }
        let x: usize = parse(path, line, "x", &rec[0])?;
        let y: usize = parse(path, line, "y", &rec[1])?;
        if x >= width || y >= height {
            return Err(format_err(
                path,
                format!("line {line}: pixel ({x}, {y}) outside grid"),
            ));
        }
        flow[(y * width + x, 0)] = parse(path, line, "u", &rec[2])?;
        flow[(y * width + x, 1)] = parse(path, line, "v", &rec[3])?;
        count += 1;
    }
    if count != height * width {
        return Err(format_err(
            path,
            format!("expected {} rows, found {count}", height * width),
        ));
    }
    Ok(flow)
}

pub fn load_scene(dir: &Path) -> Result<LoadedScene> {
    let mpath = dir.join("manifest.json");
    let manifest: SceneManifest = serde_json::from_str(&read_to_string(&mpath)?)
        .map_err(|e| format_err(&mpath, e.to_string()))?;
    let (t, h, w) = (manifest.frames, manifest.height, manifest.width);
    let trajectories = read_trajectories(&dir.join("trajectories.csv"), t, manifest.tracks)?;
    let masks = (0..t)
        .map(|f| read_mask(&mask_path(dir, f), h, w))
        .collect::<Result<Vec<_>>>()?;
    let flows = if flow_path(dir, 0).exists() {
        (0..t - 1)
            .map(|f| read_flow(&flow_path(dir, f), h, w))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(LoadedScene {
        manifest,
        trajectories,
        masks,
        flows,
    })
}
