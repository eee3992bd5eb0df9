//! Comparison methods: k-means on trajectory offsets, and SSC / LRR
//! coefficients clustered spectrally.

mod kmeans;
mod spectral;
mod subspace;

pub use kmeans::{kmeans, trajectory_offsets, KMeans, MAX_LLOYD_ITERATIONS};
pub use spectral::{
    affinity, cluster_embedding, spectral_cluster, spectral_embedding, SPECTRAL_RESTARTS,
};
pub use subspace::{
    lrr, ssc_admm, CoefficientMatrix, SubspaceMethod, LRR_LAMBDA, LRR_MAX_ITER, LRR_RHO,
    LRR_TOLERANCE, SSC_ALPHA, SSC_MAX_ITER, SSC_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ari;
use crate::scene::TrajectoryMatrix;

pub const KMEANS_RESTARTS: usize = 10;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Kmeans,
    Ssc,
    Lrr,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Kmeans => "kmeans",
            Baseline::Ssc => "ssc",
            Baseline::Lrr => "lrr",
        }
    }
}

/// Labels of one baseline for each `k` in `ks`, sharing the expensive
/// coefficient solve and eigendecomposition across `k`.
pub fn baseline_labels(
    method: Baseline,
    p: &TrajectoryMatrix,
    ks: &[usize],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    match method {
        Baseline::Kmeans => {
            let data = trajectory_offsets(p);
            ks.iter()
                .map(|&k| Ok(kmeans(&data, k, KMEANS_RESTARTS, seed)?.labels))
                .collect()
        }
        Baseline::Ssc | Baseline::Lrr => {
            let coef = if method == Baseline::Ssc {
                ssc_admm(p.positions(), SSC_ALPHA)?
            } else {
                lrr(p.positions(), LRR_LAMBDA, LRR_RHO, LRR_MAX_ITER)?
            };
            let eig = spectral_embedding(&affinity(&coef.c)?)?;
            ks.iter()
                .map(|&k| cluster_embedding(&eig, k, seed))
                .collect()
        }
    }
}

/// Best ARI over `ks` against `truth`, the oracle cluster-count protocol.
/// Returns `(best k, labels, ari)`; ties keep the smaller `k`.
pub fn best_over_k(
    method: Baseline,
    p: &TrajectoryMatrix,
    truth: &[usize],
    ks: &[usize],
    seed: u64,
) -> Result<(usize, Vec<usize>, f64)> {
    if ks.is_empty() {
        return Err(Error::invalid("k range is empty"));
    }
    let all = baseline_labels(method, p, ks, seed)?;
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for (&k, labels) in ks.iter().zip(all) {
        let score = ari(&labels, truth)?;
        if best.as_ref().is_none_or(|b| score > b.2) {
            best = Some((k, labels, score));
        }
    }
    Ok(best.expect("non-empty k range"))
}
