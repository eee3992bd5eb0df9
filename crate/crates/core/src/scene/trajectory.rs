use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Point tracks stacked as a `2T x N` matrix with interleaved rows
/// `[x_0; y_0; x_1; y_1; ...]`, one column per track.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryMatrix {
    positions: Matrix,
    visible: Vec<bool>,
    labels: Option<Vec<usize>>,
    source_frames: Vec<usize>,
    reference: usize,
}

impl TrajectoryMatrix {
    /// `visible` is frame-major: entry `t * N + n`.
    pub fn new(positions: Matrix, visible: Vec<bool>, labels: Option<Vec<usize>>) -> Result<Self> {
        if positions.rows() % 2 != 0 || positions.rows() == 0 {
            return Err(Error::invalid(format!(
                "trajectory matrix needs an even, non-zero row count, got {}",
                positions.rows()
            )));
        }
        let t = positions.rows() / 2;
        let n = positions.cols();
        if n == 0 {
            return Err(Error::invalid("trajectory matrix has no tracks"));
        }
        if visible.len() != t * n {
            return Err(Error::invalid(format!(
                "visibility has {} entries, expected {}",
                visible.len(),
                t * n
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!(
                    "{} labels for {} tracks",
                    l.len(),
                    n
                )));
            }
        }
        if !positions.is_finite() {
            return Err(Error::invalid("trajectory positions must be finite"));
        }
        Ok(TrajectoryMatrix {
            positions,
            visible,
            labels,
            source_frames: (0..t).collect(),
            reference: 0,
        })
    }

    /// Fully visible, unlabeled tracks.
    pub fn from_positions(positions: Matrix) -> Result<Self> {
        let n = positions.rows() / 2 * positions.cols();
        Self::new(positions, vec![true; n], None)
    }

    pub fn frames(&self) -> usize {
        self.positions.rows() / 2
    }

    pub fn num_tracks(&self) -> usize {
        self.positions.cols()
    }

    pub fn positions(&self) -> &Matrix {
        &self.positions
    }

    pub fn point(&self, t: usize, n: usize) -> [f64; 2] {
        [self.positions[(2 * t, n)], self.positions[(2 * t + 1, n)]]
    }

    pub fn is_visible(&self, t: usize, n: usize) -> bool {
        self.visible[t * self.num_tracks() + n]
    }

    pub fn visibility(&self) -> &[bool] {
        &self.visible
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != self.num_tracks() {
                return Err(Error::invalid("label count does not match track count"));
            }
        }
        self.labels = labels;
        Ok(self)
    }

    /// Source video frame of each row pair.
    pub fn source_frames(&self) -> &[usize] {
        &self.source_frames
    }

    /// Row-pair index of the frame whose visibility decides which tracks
    /// take part in the trajectory losses.
    pub fn reference_frame(&self) -> usize {
        self.reference
    }

    pub fn with_reference_frame(mut self, reference: usize) -> Result<Self> {
        if reference >= self.frames() {
            return Err(Error::range(
                "reference frame",
                reference,
                format!("0..{}", self.frames()),
            ));
        }
        self.reference = reference;
        Ok(self)
    }

    /// Per-track weight: 1 when visible at the reference frame, else 0.
    pub fn reference_weights(&self) -> Vec<f64> {
        let n = self.num_tracks();
        (0..n)
            .map(|i| {
                if self.is_visible(self.reference, i) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Frames `center - f ..= center + f`, reflected at the video ends.
    pub fn window(&self, center: usize, f: usize) -> Result<TrajectoryMatrix> {
        let t = self.frames();
        if center >= t {
            return Err(Error::range("window center", center, format!("0..{t}")));
        }
        let order: Vec<usize> = (0..=2 * f)
            .map(|i| reflect(center as i64 - f as i64 + i as i64, t))
            .collect();
        let n = self.num_tracks();
        let mut positions = Matrix::zeros(2 * order.len(), n);
        let mut visible = Vec::with_capacity(order.len() * n);
        for (row, &src) in order.iter().enumerate() {
            positions
                .row_mut(2 * row)
                .copy_from_slice(self.positions.row(2 * src));
            positions
                .row_mut(2 * row + 1)
                .copy_from_slice(self.positions.row(2 * src + 1));
            visible.extend_from_slice(&self.visible[src * n..(src + 1) * n]);
        }
        Ok(TrajectoryMatrix {
            positions,
            visible,
            labels: self.labels.clone(),
            source_frames: order.iter().map(|&s| self.source_frames[s]).collect(),
            reference: f,
        })
    }

    /// Keeps the listed tracks in the given order.
    pub fn select_tracks(&self, idx: &[usize]) -> TrajectoryMatrix {
        let n = self.num_tracks();
        let t = self.frames();
        let mut visible = Vec::with_capacity(t * idx.len());
        for f in 0..t {
            visible.extend(idx.iter().map(|&i| self.visible[f * n + i]));
        }
        TrajectoryMatrix {
            positions: self.positions.select_columns(idx),
            visible,
            labels: self
                .labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            source_frames: self.source_frames.clone(),
            reference: self.reference,
        }
    }
}

/// Reflection padding: `-1 -> 1`, `T -> T-2`, repeated periodically.
pub fn reflect(i: i64, t: usize) -> usize {
    if t == 1 {
        return 0;
    }
    let period = 2 * (t as i64 - 1);
    let m = i.rem_euclid(period);
    if m >= t as i64 {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Per-frame `H x W` grid of integer labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    height: usize,
    width: usize,
    labels: Vec<usize>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "label grid {height}x{width} cannot hold {} labels",
                labels.len()
            )));
        }
        Ok(LabelGrid {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: usize) -> Self {
        LabelGrid {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: usize) {
        self.labels[row * self.width + col] = label;
    }

    /// Row-major labels.
    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.labels
    }

    /// Nearest-pixel lookup at pixel coordinates; `None` outside the grid.
    pub fn at_pixel(&self, x: f64, y: f64) -> Option<usize> {
        let col = x.round();
        let row = y.round();
        if !(col >= 0.0 && row >= 0.0) || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some(self.get(row as usize, col as usize))
    }

    /// Nearest-pixel lookup at normalized coordinates, clamped to the border.
    pub fn at_normalized(&self, x: f64, y: f64) -> usize {
        let col = (x * (self.width - 1) as f64)
            .round()
            .clamp(0.0, (self.width - 1) as f64);
        let row = (y * (self.height - 1) as f64)
            .round()
            .clamp(0.0, (self.height - 1) as f64);
        self.get(row as usize, col as usize)
    }

    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, n: usize) -> TrajectoryMatrix {
        let p = Matrix::from_fn(2 * t, n, |r, c| {
            (r / 2) as f64 * 10.0 + c as f64 + 0.5 * (r % 2) as f64
        });
        TrajectoryMatrix::from_positions(p).unwrap()
    }

    #[test]
    fn reflection_rule() {
        let order: Vec<usize> = (-2..=2).map(|i| reflect(i, 5)).collect();
        assert_eq!(order, vec![2, 1, 0, 1, 2]);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(9, 5), 1);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn window_at_start_reflects() {
        let w = ramp(4, 3).window(0, 2).unwrap();
        assert_eq!(w.source_frames(), &[2, 1, 0, 1, 2]);
        assert_eq!(w.frames(), 5);
        assert_eq!(w.point(0, 1), [21.0, 21.5]);
        assert_eq!(w.reference_frame(), 2);
    }

    #[test]
    fn window_at_end_and_zero_width() {
        let tm = ramp(6, 2);
        assert_eq!(tm.window(5, 1).unwrap().source_frames(), &[4, 5, 4]);
        let w = tm.window(3, 0).unwrap();
        assert_eq!(w.frames(), 1);
        assert_eq!(w.point(0, 0), tm.point(3, 0));
        assert!(tm.window(6, 1).is_err());
    }

    #[test]
    fn window_carries_visibility() {
        let p = Matrix::zeros(6, 2);
        let vis = vec![true, true, false, true, true, false];
        let tm = TrajectoryMatrix::new(p, vis, None).unwrap();
        let w = tm.window(2, 1).unwrap();
        assert!(w.is_visible(0, 1) && !w.is_visible(0, 0));
        assert!(!w.is_visible(1, 1));
    }

    #[test]
    fn nearest_pixel_lookup() {
        let mut g = LabelGrid::filled(3, 4, 0);
        g.set(1, 2, 7);
        assert_eq!(g.at_pixel(2.4, 0.6), Some(7));
        assert_eq!(g.at_pixel(-0.6, 0.0), None);
        assert_eq!(g.at_pixel(3.4, 2.4), Some(0));
        assert_eq!(g.at_normalized(2.0 / 3.0, 0.5), 7);
        assert_eq!(g.at_normalized(5.0, -1.0), 0);
    }
}
