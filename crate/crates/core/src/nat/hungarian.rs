//! Minimum-cost perfect assignment on a square cost matrix.
//!
//! Shortest-augmenting-path Hungarian method with row/column potentials,
//! O(n³). Among all optimal assignments the lexicographically smallest
//! row→column vector is returned: with the final potentials, optimal
//! assignments are exactly the perfect matchings on zero-reduced-cost edges,
//! so rows are fixed in order to their smallest column that still admits a
//! perfect tight matching.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `cols[i]` is the column assigned to row `i`.
    pub cols: Vec<usize>,
    /// `Σ_i cost[i, cols[i]]`, summed in row order.
    pub cost: f64,
}

pub fn hungarian(cost: &DenseMatrix) -> Result<Assignment> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::dim(
            "hungarian (square cost)",
            format!("{n}x{n}"),
            format!("{}x{}", n, cost.cols()),
        ));
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("hungarian cost"));
    }
    if n == 0 {
        return Ok(Assignment {
            cols: Vec::new(),
            cost: 0.0,
        });
    }

    // 1-indexed potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; n + 1];
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
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < min_v[j] {
                    min_v[j] = cur;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
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

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }

    let scale = cost.as_slice().iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let tol = 1e-11 * scale * n as f64;
    let tight = |i: usize, j: usize| cost.get(i, j) - u[i + 1] - v[j + 1] <= tol;
    lexicographic_tight_matching(n, &tight, &mut row_to_col);

    let total = row_to_col.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok(Assignment {
        cols: row_to_col,
        cost: total,
    })
}

/// Rewrites a perfect matching on the tight graph into the lexicographically
/// smallest one.
fn lexicographic_tight_matching(n: usize, tight: &dyn Fn(usize, usize) -> bool, row_to_col: &mut [usize]) {
    let mut col_to_row = vec![0usize; n];
    for (i, &j) in row_to_col.iter().enumerate() {
        col_to_row[j] = i;
    }
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            // Give j to i: j's owner must reach i's old column via an
            // alternating path over unfixed rows (> i) and columns.
            let start = col_to_row[j];
            let goal = row_to_col[i];
            if let Some(path) = alternating_path(n, i, j, start, goal, tight, &col_fixed, &col_to_row) {
                // path: (row, new column) pairs
                for &(r, c) in &path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        col_fixed[row_to_col[i]] = true;
    }
}

#[allow(clippy::too_many_arguments)]
fn alternating_path(
    n: usize,
    fixing_row: usize,
    taken_col: usize,
    start_row: usize,
    goal_col: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    col_fixed: &[bool],
    col_to_row: &[usize],
) -> Option<Vec<(usize, usize)>> {
    // BFS over rows; parent[c] = row that reached column c.
    let mut parent_of_col: Vec<Option<usize>> = vec![None; n];
    let mut queue = VecDeque::from([start_row]);
    let mut seen_row = vec![false; n];
    seen_row[start_row] = true;
    while let Some(r) = queue.pop_front() {
        for c in 0..n {
            if c == taken_col || col_fixed[c] || parent_of_col[c].is_some() || !tight(r, c) {
                continue;
            }
            parent_of_col[c] = Some(r);
            if c == goal_col {
                let mut path = Vec::new();
                let mut col = c;
                loop {
                    let row = parent_of_col[col].expect("reached column has a parent");
                    path.push((row, col));
                    if row == start_row {
                        return Some(path);
                    }
                    // row currently owns some column that was used to reach it
                    col = col_to_row_inverse(row, col_to_row);
                }
            }
            let next = col_to_row[c];
            if next != fixing_row && !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}

fn col_to_row_inverse(row: usize, col_to_row: &[usize]) -> usize {
    col_to_row.iter().position(|&r| r == row).expect("row is matched")
}
