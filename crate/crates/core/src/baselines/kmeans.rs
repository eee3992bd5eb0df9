use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scene::TrajectoryMatrix;
use crate::seed::derive;

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    /// `k x d`.
    pub centers: Matrix,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after the initial assignment and after every Lloyd update.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Best of `restarts` k-means++ seeded Lloyd runs on the rows of `data`.
/// Restart `i` draws from `derive(seed, [i])`.
pub fn kmeans(data: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<KMeans> {
    let n = data.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "k-means needs 1 <= k <= N, got k = {k}, N = {n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::invalid("k-means needs at least one restart"));
    }
    if !data.is_finite() {
        return Err(Error::invalid("k-means input is not finite"));
    }
    let mut best: Option<KMeans> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[r as u64]));
        let run = lloyd(data, plus_plus(data, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means++ seeding: each new center is drawn with probability
/// proportional to the squared distance to the nearest chosen center.
fn plus_plus(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let (n, d) = data.shape();
    let mut centers = Matrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(data.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(data.row(i), data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // Every point coincides with a center already.
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(data.row(pick));
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min(sq_dist(data.row(i), data.row(pick)));
        }
    }
    centers
}

fn assign(data: &Matrix, centers: &Matrix) -> (Vec<usize>, f64) {
    let mut total = 0.0;
    let labels = (0..data.rows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.rows() {
                let d = sq_dist(data.row(i), centers.row(c));
                if d < best.1 {
                    best = (c, d);
                }
            }
            total += best.1;
            best.0
        })
        .collect();
    (labels, total)
}

fn lloyd(data: &Matrix, mut centers: Matrix) -> KMeans {
    let (n, d) = data.shape();
    let k = centers.rows();
    let (mut labels, mut wcss) = assign(data, &centers);
    let mut history = vec![wcss];
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            // Empty clusters keep their previous center.
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let (next, next_wcss) = assign(data, &centers);
        wcss = next_wcss;
        history.push(wcss);
        if next == labels {
            break;
        }
        labels = next;
    }
    KMeans {
        labels,
        centers,
        wcss,
        iterations,
        history,
    }
}

/// Rows are tracks; columns are the `2T` coordinates minus each track's
/// frame-0 position.
pub fn trajectory_offsets(p: &TrajectoryMatrix) -> Matrix {
    let pos = p.positions();
    Matrix::from_fn(p.num_tracks(), pos.rows(), |n, r| {
        pos[(r, n)] - pos[(r % 2, n)]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let data = Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]]);
        let r = kmeans(&data, 2, 5, 1).unwrap();
        assert_eq!(r.wcss, 4.0);
        assert_eq!(r.labels[0], r.labels[2]);
        assert_eq!(r.labels[3], r.labels[5]);
        assert_ne!(r.labels[0], r.labels[3]);
    }

    #[test]
    fn single_cluster_and_bad_k() {
        let data = Matrix::from_rows(&[[0.0, 1.0], [3.0, 2.0], [5.0, 5.0]]);
        assert_eq!(kmeans(&data, 1, 3, 0).unwrap().labels, vec![0, 0, 0]);
        assert!(kmeans(&data, 4, 1, 0).is_err());
        assert!(kmeans(&data, 0, 1, 0).is_err());
    }

    #[test]
    fn duplicate_points_do_not_break_seeding() {
        let data = Matrix::from_rows(&[[1.0], [1.0], [1.0]]);
        let r = kmeans(&data, 3, 2, 7).unwrap();
        assert_eq!(r.wcss, 0.0);
    }

    #[test]
    fn offsets_start_at_zero() {
        let p = TrajectoryMatrix::from_positions(Matrix::from_rows(&[
            [0.1, 0.5],
            [0.2, 0.5],
            [0.3, 0.9],
            [0.2, 0.1],
        ]))
        .unwrap();
        let o = trajectory_offsets(&p);
        assert_eq!(o.row(0)[..2], [0.0, 0.0]);
        assert!((o[(0, 2)] - 0.2).abs() < 1e-15 && (o[(1, 3)] + 0.4).abs() < 1e-15);
    }
}
