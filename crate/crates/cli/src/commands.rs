use std::path::{Path, PathBuf};

use serde::Serialize;

use lrtl::baselines::best_over_k;
use lrtl::feasibility::{check_landscape, sweep as run_sweep, SweepGrid};
use lrtl::files::{create_dir, sig9, write_atomic};
use lrtl::gradcheck::{self, GradcheckConfig, Outcome};
use lrtl::metrics::{evaluate, MetricReport, BACKGROUND};
use lrtl::optim::{labels_csv, optimize_sequence, FlowFields};
use lrtl::scene::{load_scene, make_scene, write_scene, SceneConfig, SceneManifest, SceneMode};

use crate::config::{load, load_required, Method, SegmentConfig, SweepConfig};
use crate::{Common, Format};

pub const EXIT_ASSERTION: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;

/// Largest `σ₅/σ₁` a noise-free affine ground-truth group may have.
pub const RANK_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Assertion(_) | CliError::Failed(_) => EXIT_ASSERTION,
        }
    }
}

impl From<lrtl::Error> for CliError {
    fn from(e: lrtl::Error) -> Self {
        match e {
            lrtl::Error::Io { .. } | lrtl::Error::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn config_err(e: lrtl::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn out_dir(common: &Common) -> Result<&Path, CliError> {
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("--out is required".into()))?;
    create_dir(dir)?;
    Ok(dir)
}

fn write(path: PathBuf, contents: &str) -> Result<(), CliError> {
    Ok(write_atomic(&path, contents.as_bytes())?)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn synth(common: &Common) -> Result<(), CliError> {
    let mut cfg: SceneConfig = load_required(common.config.as_deref(), "synth")?;
    if let Some(seed) = common.seed {
        cfg.motion_seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    let dir = out_dir(common)?;
    let scene = make_scene(&cfg)?;
    let manifest = write_scene(&scene, dir)?;
    let mut line = format!(
        "N={} T={} K_gt={} mode={}",
        manifest.tracks,
        manifest.frames,
        manifest.num_objects,
        cfg.mode.name()
    );
    if cfg.mode == SceneMode::Rigid3dAffine && cfg.noise_sigma == 0.0 {
        let worst = scene.rank_ratios(5)?.into_iter().fold(0.0, f64::max);
        let ok = worst < RANK_CHECK_TOL;
        line.push_str(&format!(
            " rank_check={} max_sigma5_over_sigma1={}",
            if ok { "pass" } else { "fail" },
            sig9(worst)
        ));
        println!("{line}");
        if !ok {
            return Err(CliError::Assertion(format!(
                "ground-truth group has sigma5/sigma1 = {} >= {RANK_CHECK_TOL}",
                sig9(worst)
            )));
        }
    } else {
        println!("{line} rank_check=skipped");
    }
    Ok(())
}

#[derive(Serialize)]
struct SegmentReport {
    method: &'static str,
    /// Cluster count picked by the oracle sweep, baselines only.
    best_k: Option<usize>,
    #[serde(flatten)]
    metrics: MetricReport,
}

impl SegmentReport {
    fn to_csv(&self) -> String {
        format!(
            "method,best_k,{}\n{},{},{}\n",
            MetricReport::CSV_HEADER,
            self.method,
            self.best_k.map(|k| k.to_string()).unwrap_or_default(),
            self.metrics.csv_row()
        )
    }
}

pub fn segment(common: &Common, scene_dir: &Path, method: Option<Method>) -> Result<(), CliError> {
    let mut cfg: SegmentConfig = load(common.config.as_deref())?;
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.optim.seed = seed;
    }
    cfg.validate()?;
    let dir = out_dir(common)?;
    let scene = load_scene(scene_dir)?;
    let p = &scene.trajectories;
    let truth = p.labels();
    let (labels, best_k) = match cfg.method.baseline() {
        None => {
            let flows = (cfg.use_flow && !scene.flows.is_empty()).then(|| FlowFields {
                fields: &scene.flows,
                grid: (scene.manifest.height, scene.manifest.width),
            });
            let (a, trace) = optimize_sequence(p, flows, &cfg.optim)?;
            write(dir.join("trace.csv"), &trace.to_csv())?;
            (a.hard_labels(), None)
        }
        Some(b) => {
            let truth = truth.ok_or_else(|| {
                CliError::Config("baselines pick k by ground truth; the scene has no labels".into())
            })?;
            let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
            let (k, labels, _) = best_over_k(b, p, truth, &ks, cfg.seed)?;
            (labels, Some(k))
        }
    };
    write(dir.join("labels.csv"), &labels_csv(&labels))?;
    let Some(truth) = truth else {
        println!(
            "method={} tracks={} (no ground truth, metrics skipped)",
            cfg.method.name(),
            labels.len()
        );
        return Ok(());
    };
    if truth.len() != labels.len() {
        return Err(CliError::Failed(format!(
            "{} labels for {} ground-truth tracks",
            labels.len(),
            truth.len()
        )));
    }
    let report = SegmentReport {
        method: cfg.method.name(),
        best_k,
        metrics: evaluate(&labels, truth, BACKGROUND)?,
    };
    match common.format {
        Format::Json => write(dir.join("metrics.json"), &json(&report))?,
        Format::Csv => write(dir.join("metrics.csv"), &report.to_csv())?,
    }
    println!(
        "method={} ari={} k_pred={} k_true={}{}",
        report.method,
        sig9(report.metrics.ari),
        report.metrics.k_pred,
        report.metrics.k_true,
        best_k.map(|k| format!(" best_k={k}")).unwrap_or_default()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    scene: String,
    manifest: &'a SceneManifest,
    grid: &'a SweepGrid,
    checks: lrtl::feasibility::LandscapeChecks,
    violations: &'a [String],
    skipped_splits: usize,
}

pub fn sweep(common: &Common, scene_dir: &Path) -> Result<(), CliError> {
    let cfg: SweepConfig = load(common.config.as_deref())?;
    let dir = out_dir(common)?;
    let scene = load_scene(scene_dir)?;
    let m = scene.manifest.num_objects as i64;
    let grid = SweepGrid {
        eta: cfg.eta.clone(),
        s: cfg.s.clone().unwrap_or_else(|| (-m..=m).collect()),
        tau: cfg.tau.clone(),
        trials: cfg.trials,
        loss: cfg.loss,
        r: cfg.r,
        seed: common.seed.unwrap_or(cfg.seed),
    };
    if let Some(bad) = grid.s.iter().find(|s| s.abs() > m) {
        return Err(CliError::Config(format!(
            "s = {bad} exceeds the scene's {m} objects"
        )));
    }
    if grid.eta.iter().any(|e| !(0.0..=1.0).contains(e)) || grid.tau.iter().any(|t| !(*t > 0.0)) {
        return Err(CliError::Config(
            "eta must lie in [0, 1] and tau must be positive".into(),
        ));
    }
    let result = run_sweep(&scene.trajectories, &scene.masks, &grid).map_err(|e| match e {
        lrtl::Error::InvalidInput(msg) => CliError::Config(msg),
        other => other.into(),
    })?;
    let violations = check_landscape(&result, &cfg.checks);
    write(dir.join("sweep.csv"), &result.to_csv())?;
    let summary = SweepSummary {
        scene: scene_dir.join("manifest.json").display().to_string(),
        manifest: &scene.manifest,
        grid: &grid,
        checks: cfg.checks,
        violations: &violations,
        skipped_splits: result.cells.iter().map(|c| c.skipped_splits).sum(),
    };
    write(dir.join("sweep.json"), &json(&summary))?;
    println!(
        "cells={} trials={} violations={}",
        result.cells.len(),
        grid.trials,
        violations.len()
    );
    if violations.is_empty() {
        Ok(())
    } else {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        Err(CliError::Assertion(violations.join("; ")))
    }
}

fn gradcheck_csv(rep: &gradcheck::GradcheckReport) -> String {
    let mut out = String::from("loss,instance,status,rel_error\n");
    for c in &rep.checks {
        let (status, err) = match c.outcome {
            Outcome::Checked { rel_error } => ("checked", sig9(rel_error)),
            Outcome::Skipped { .. } => ("skipped", String::new()),
        };
        out.push_str(&format!("{},{},{status},{err}\n", c.loss, c.instance));
    }
    out
}

pub fn gradcheck(common: &Common) -> Result<(), CliError> {
    let mut cfg: GradcheckConfig = load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(config_err)?;
    let dir = match &common.out {
        Some(_) => Some(out_dir(common)?),
        None => None,
    };
    let rep = gradcheck::run(&cfg)?;
    for c in rep.checks.iter() {
        if let Outcome::Skipped { reason } = &c.outcome {
            eprintln!(
                "warning: {} instance {} skipped: {reason}",
                c.loss, c.instance
            );
        }
    }
    print!("{}", rep.to_text());
    if let Some(dir) = dir {
        match common.format {
            Format::Json => write(dir.join("gradcheck.json"), &json(&rep))?,
            Format::Csv => write(dir.join("gradcheck.csv"), &gradcheck_csv(&rep))?,
        }
    }
    if rep.passed() {
        Ok(())
    } else {
        Err(CliError::Assertion(format!(
            "gradient error above {}",
            rep.tolerance
        )))
    }
}
