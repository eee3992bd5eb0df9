use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentMode {
    /// One row per trajectory.
    Point,
    /// One row per pixel, row-major over the grid.
    Pixel,
}

/// Row-stochastic soft membership of rows (points or pixels) in `K`
/// segments.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment {
    weights: Matrix,
    mode: AssignmentMode,
}

impl SoftAssignment {
    /// Validates that every entry lies in `[0, 1]` and every row sums to one.
    pub fn new(weights: Matrix, mode: AssignmentMode) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid(
                "assignment needs at least one row and segment",
            ));
        }
        for i in 0..weights.rows() {
            let row = weights.row(i);
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::invalid(format!(
                    "assignment row {i} has entries outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("assignment row {i} sums to {s}")));
            }
        }
        Ok(SoftAssignment { weights, mode })
    }

    pub fn from_logits(logits: &Matrix, mode: AssignmentMode) -> Self {
        SoftAssignment {
            weights: softmax_rows(logits),
            mode,
        }
    }

    /// One-hot rows; labels must be `< k`.
    pub fn from_labels(labels: &[usize], k: usize, mode: AssignmentMode) -> Result<Self> {
        if labels.is_empty() || k == 0 {
            return Err(Error::invalid("one-hot assignment needs labels and k >= 1"));
        }
        let mut w = Matrix::zeros(labels.len(), k);
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(Error::invalid(format!(
                    "label {l} at row {i} is not below k = {k}"
                )));
            }
            w[(i, l)] = 1.0;
        }
        Ok(SoftAssignment { weights: w, mode })
    }

    pub fn uniform(rows: usize, k: usize, mode: AssignmentMode) -> Self {
        SoftAssignment {
            weights: Matrix::from_fn(rows, k, |_, _| 1.0 / k as f64),
            mode,
        }
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn mode(&self) -> AssignmentMode {
        self.mode
    }

    pub fn rows(&self) -> usize {
        self.weights.rows()
    }

    pub fn segments(&self) -> usize {
        self.weights.cols()
    }

    /// Argmax per row, ties resolved toward the lowest segment index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.rows())
            .map(|i| {
                let row = self.weights.row(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

/// Pulls a gradient with respect to softmax outputs `a` back to the logits:
/// `dz = a ⊙ (g - Σ_k a_k g_k)` per row.
pub fn softmax_backward(a: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let (ar, gr) = (a.row(i), g.row(i));
        let dot: f64 = ar.iter().zip(gr).map(|(x, y)| x * y).sum();
        for (o, (x, y)) in out.row_mut(i).iter_mut().zip(ar.iter().zip(gr)) {
            *o = x * (y - dot);
        }
    }
    out
}
