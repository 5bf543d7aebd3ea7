//! Minimum-cost one-to-one assignment.
//!
//! `hungarian` returns min(n, m) pairs minimizing the total cost. Among
//! all optimal matchings, the result is the lexicographically smallest
//! sequence of (row, column) pairs, which pins the output when costs tie.

use crate::error::{Error, Result};

/// Shortest-augmenting-path solver with potentials, rows <= cols.
/// Returns (total cost, col index per row).
fn solve_rows_leq_cols(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> (f64, Vec<usize>) {
    let n = rows.len();
    let m = cols.len();
    debug_assert!(n <= m);
    if n == 0 {
        return (0.0, Vec::new());
    }
    let a = |i: usize, j: usize| cost[rows[i - 1]][cols[j - 1]];

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    // p[j] = row occupying column j (1-indexed; 0 = free)
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
            total += a(p[j], j);
        }
    }
    (total, row_to_col)
}

/// Optimal total cost of matching min(|rows|, |cols|) pairs.
fn optimal_value(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    if rows.len() <= cols.len() {
        solve_rows_leq_cols(cost, rows, cols).0
    } else {
        // transpose by swapping index roles
        let transposed: Vec<Vec<f64>> = cols
            .iter()
            .map(|&c| rows.iter().map(|&r| cost[r][c]).collect())
            .collect();
        let rr: Vec<usize> = (0..cols.len()).collect();
        let cc: Vec<usize> = (0..rows.len()).collect();
        solve_rows_leq_cols(&transposed, &rr, &cc).0
    }
}

/// Minimum-cost one-to-one assignment over an n x m matrix of finite costs.
///
/// Returns min(n, m) `(row, col)` pairs sorted by row. Ties between optimal
/// matchings resolve to the lexicographically smallest pair sequence.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    for row in cost {
        if row.len() != m {
            return Err(Error::InvalidInput("ragged cost matrix".to_string()));
        }
        for &c in row {
            if !c.is_finite() {
                return Err(Error::InvalidInput(
                    "cost matrix entries must be finite".to_string(),
                ));
            }
        }
    }
    if m == 0 {
        return Ok(Vec::new());
    }

    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let total = optimal_value(cost, &all_rows, &all_cols);

    // Fix pairs row by row, preferring the smallest column that still
    // attains the optimum; a row may stay unmatched only when n > m.
    let scale: f64 = cost
        .iter()
        .flat_map(|r| r.iter())
        .fold(1.0f64, |acc, &c| acc.max(c.abs()));
    let eps = 1e-9 * scale * (n.min(m) as f64);

    let mut result = Vec::with_capacity(n.min(m));
    let mut cols_left = all_cols;
    let mut acc = 0.0f64;
    for r in 0..n {
        if cols_left.is_empty() {
            break;
        }
        let rows_after: Vec<usize> = (r + 1..n).collect();
        let mut chosen: Option<usize> = None;
        for (ci, &c) in cols_left.iter().enumerate() {
            let mut rest_cols = cols_left.clone();
            rest_cols.remove(ci);
            let candidate = acc + cost[r][c] + optimal_value(cost, &rows_after, &rest_cols);
            if (candidate - total).abs() <= eps {
                chosen = Some(ci);
                break;
            }
        }
        match chosen {
            Some(ci) => {
                let c = cols_left.remove(ci);
                acc += cost[r][c];
                result.push((r, c));
            }
            None => {
                // row r is unmatched in every optimal matching extension
                debug_assert!(n > m);
            }
        }
    }
    Ok(result)
}
