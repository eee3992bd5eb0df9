//! Losses over soft segment assignments, each with an analytic gradient
//! with respect to the pre-softmax logits.
//!
//! Coordinates are normalized to `[0, 1]` everywhere; flow and displacements
//! are in pixels.

mod assignment;
mod combined;
mod flow;
mod temporal;
mod trajectory;

pub use assignment::{softmax_backward, softmax_rows, AssignmentMode, SoftAssignment};
pub use combined::{combined_loss, DenseInputs, LossBreakdown, LossWeights, TemporalPair};
pub use flow::{
    embed_point, flow_loss, flow_loss_grad, point_flow_loss, quad_embed, sampled_flow_grad,
    tracks_as_flow_grad, tracks_as_flow_loss, SegmentFit, EMBED_DIM,
};
pub use temporal::{bilinear, temporal_smooth_loss, TemporalLoss, DEFAULT_DT};
pub use trajectory::{
    base_matrix, traj_loss_grad, traj_loss_lt, traj_loss_lt_grad, traj_loss_per,
    traj_loss_per_grad, traj_loss_rec, traj_loss_rec_grad, traj_loss_segments, TrajLossKind,
    DEFAULT_RANK, PERSPECTIVE_RANK,
};
