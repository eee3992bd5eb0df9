use crate::linalg::Matrix;

/// Result of a minimum-cost matching.
#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    /// Column matched to each row; `None` for rows left over when there are
    /// more rows than columns.
    pub rows: Vec<Option<usize>>,
    /// Sum of matched costs, accumulated in row order.
    pub cost: f64,
}

/// Minimum-cost maximum matching of a (possibly rectangular) cost matrix.
///
/// Rectangular inputs are padded to square with a constant sentinel cost,
/// which shifts every complete matching by the same amount. Among optimal
/// matchings the lexicographically smallest row-to-column vector is
/// returned.
pub fn hungarian(cost: &Matrix) -> Matching {
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Matching {
            rows: vec![None; n],
            cost: 0.0,
        };
    }
    let size = n.max(m);
    let sentinel = cost.max_abs() + 1.0;
    let square = Matrix::from_fn(size, size, |i, j| {
        if i < n && j < m {
            cost[(i, j)]
        } else {
            sentinel
        }
    });

    let best = solve_square(&square, &[]).1;
    let tol = 1e-9 * best.abs().max(1.0);
    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(size);
    let mut used = vec![false; size];
    for i in 0..size {
        let mut chosen = None;
        for c in 0..size {
            if used[c] {
                continue;
            }
            fixed.push((i, c));
            let (_, v) = solve_square(&square, &fixed);
            if v <= best + tol {
                chosen = Some(c);
                break;
            }
            fixed.pop();
        }
        let c = chosen.unwrap_or_else(|| {
            // Round-off pushed every candidate over the tolerance; fall back
            // to the unconstrained optimum for the remaining rows.
            let (assign, _) = solve_square(&square, &fixed);
            let c = assign[i];
            fixed.push((i, c));
            c
        });
        used[c] = true;
    }

    let mut rows = vec![None; n];
    let mut total = 0.0;
    for &(i, c) in &fixed {
        if i < n && c < m {
            rows[i] = Some(c);
            total += cost[(i, c)];
        }
    }
    Matching { rows, cost: total }
}

/// Optimal assignment of a square matrix with some `(row, col)` pairs
/// forced. Returns the column of each row and the total cost.
fn solve_square(a: &Matrix, forced: &[(usize, usize)]) -> (Vec<usize>, f64) {
    let n = a.rows();
    let mut row_free = vec![true; n];
    let mut col_free = vec![true; n];
    for &(i, c) in forced {
        row_free[i] = false;
        col_free[c] = false;
    }
    let rows: Vec<usize> = (0..n).filter(|&i| row_free[i]).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| col_free[j]).collect();
    let sub = Matrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])]);
    let sub_assign = shortest_augmenting_path(&sub);

    let mut assign = vec![0; n];
    let mut total = 0.0;
    for &(i, c) in forced {
        assign[i] = c;
    }
    for (k, &i) in rows.iter().enumerate() {
        assign[i] = cols[sub_assign[k]];
    }
    for (i, &c) in assign.iter().enumerate() {
        total += a[(i, c)];
    }
    (assign, total)
}

/// O(n³) Hungarian algorithm with row and column potentials.
fn shortest_augmenting_path(a: &Matrix) -> Vec<usize> {
    let n = a.rows();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays with index 0 as the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[owner[j] - 1] = j - 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let m = hungarian(&Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]));
        assert_eq!(m.rows, vec![Some(0), Some(1)]);
        assert_eq!(m.cost, 2.0);
        let m = hungarian(&Matrix::from_rows(&[[7.0]]));
        assert_eq!((m.rows, m.cost), (vec![Some(0)], 7.0));
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let m = hungarian(&Matrix::from_fn(3, 3, |_, _| 1.0));
        assert_eq!(m.rows, vec![Some(0), Some(1), Some(2)]);
        let m = hungarian(&Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.0]]));
        assert_eq!(m.rows, vec![Some(0), Some(1)]);
    }

    #[test]
    fn rectangular_inputs() {
        // More rows than columns: the costliest row stays unmatched.
        let m = hungarian(&Matrix::from_rows(&[[5.0], [1.0], [3.0]]));
        assert_eq!(m.rows, vec![None, Some(0), None]);
        assert_eq!(m.cost, 1.0);
        let m = hungarian(&Matrix::from_rows(&[[4.0, 2.0, 8.0]]));
        assert_eq!((m.rows, m.cost), (vec![Some(1)], 2.0));
    }
}
