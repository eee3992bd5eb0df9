use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lrtl::baselines::Baseline;
use lrtl::feasibility::LandscapeChecks;
use lrtl::losses::TrajLossKind;
use lrtl::optim::OptimConfig;

use crate::commands::CliError;

#[derive(Serialize, Deserialize, ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lrtl,
    Kmeans,
    Ssc,
    Lrr,
}

impl Method {
    pub fn baseline(self) -> Option<Baseline> {
        match self {
            Method::Lrtl => None,
            Method::Kmeans => Some(Baseline::Kmeans),
            Method::Ssc => Some(Baseline::Ssc),
            Method::Lrr => Some(Baseline::Lrr),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Lrtl => "lrtl",
            Method::Kmeans => "kmeans",
            Method::Ssc => "ssc",
            Method::Lrr => "lrr",
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentConfig {
    pub method: Method,
    pub optim: OptimConfig,
    /// Include the dense flow term when the scene has flow fields.
    pub use_flow: bool,
    /// Inclusive cluster counts swept by the baselines.
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            method: Method::Lrtl,
            optim: OptimConfig::default(),
            use_flow: false,
            k_min: 2,
            k_max: 8,
            seed: 0,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.k_min < 1 || self.k_min > self.k_max {
            return Err(CliError::Config(format!(
                "k_min..=k_max must be a non-empty range of positive counts, got {}..={}",
                self.k_min, self.k_max
            )));
        }
        self.optim
            .validate()
            .map_err(|e| CliError::Config(format!("optim: {e}")))
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub eta: Vec<f64>,
    /// Structural values; `None` means every value in `-m..=m` for the
    /// scene's `m` objects.
    pub s: Option<Vec<i64>>,
    pub tau: Vec<f64>,
    pub trials: usize,
    pub loss: TrajLossKind,
    pub r: usize,
    pub seed: u64,
    pub checks: LandscapeChecks,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let g = lrtl::feasibility::SweepGrid::standard(0, 0);
        SweepConfig {
            eta: g.eta,
            s: None,
            tau: g.tau,
            trials: g.trials,
            loss: g.loss,
            r: g.r,
            seed: 0,
            checks: LandscapeChecks::default(),
        }
    }
}

/// Parses `path` as JSON, or returns the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Like [`load`] for configs without a sensible default.
pub fn load_required<T: DeserializeOwned>(path: Option<&Path>, what: &str) -> Result<T, CliError> {
    let path = path.ok_or_else(|| CliError::Config(format!("{what} needs --config")))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
