//! Low-rank trajectory losses for unsupervised motion segmentation.
//!
//! Point trajectories that belong to one rigid object span a low-dimensional
//! subspace. This crate scores soft groupings of trajectories by how far
//! each group is from low rank, optimizes groupings directly against those
//! scores, and ships the pieces needed to evaluate the idea end to end:
//!
//! - [`linalg`]: SVD, truncation, ridge least squares, symmetric
//!   eigendecomposition and tail-singular-value gradients.
//! - [`scene`]: synthetic planar and rigid 3D scenes with exact trajectories,
//!   masks and flow.
//! - [`losses`]: flow, trajectory, tracks-as-flow and temporal smoothing
//!   losses with analytic gradients.
//! - [`optim`]: per-sequence optimization of assignment logits.
//! - [`baselines`]: k-means, sparse subspace clustering, low-rank
//!   representation and spectral clustering.
//! - [`metrics`]: ARI, foreground ARI, Hungarian matching and matched Jaccard.
//! - [`feasibility`]: mask corruptions and loss-landscape sweeps.
//! - [`gradcheck`]: finite-difference checks of the loss gradients.

pub mod baselines;
pub mod error;
pub mod feasibility;
pub mod files;
pub mod gradcheck;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod scene;
pub(crate) mod seed;

pub use error::{Error, Result};
pub use linalg::Matrix;
