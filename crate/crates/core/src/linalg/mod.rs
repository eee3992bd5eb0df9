//! Dense linear-algebra kernels shared by the losses and the baselines.

mod eig;
mod lstsq;
mod matrix;
mod svd;
mod tail;

pub use eig::{sym_eig, SymEig};
pub use lstsq::{lstsq, RIDGE_RELATIVE};
pub use matrix::Matrix;
pub use svd::{singular_values, svd, truncate, Svd};
pub use tail::{tail_singular_grad, tail_singular_sum};

pub(crate) use lstsq::{cholesky, cholesky_solve, solve_normal_refined};
