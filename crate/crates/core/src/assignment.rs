//! Minimum-cost bipartite assignment (Hungarian method with row/column
//! potentials and shortest augmenting paths, O(n³)).

use crate::error::{invalid, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(invalid(format!(
                "cost matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged cost matrix"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Solves the rectangular assignment problem: every row is matched when
/// `rows ≤ cols`, every column otherwise. Returns `(row, col)` pairs sorted
/// by row.
///
/// The matrix is padded to square with zero-cost dummy rows or columns; a
/// constant dummy line adds the same amount to every complete assignment,
/// so the optimum over real pairs is unchanged.
pub fn solve(cost: &CostMatrix) -> Result<Vec<(usize, usize)>> {
    if let Some(i) = cost.data.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!(
            "non-finite cost at ({}, {})",
            i / cost.cols.max(1),
            i % cost.cols.max(1)
        )));
    }
    let n = cost.rows.max(cost.cols);
    if cost.rows == 0 || cost.cols == 0 {
        return Ok(Vec::new());
    }
    let at = |r: usize, c: usize| -> f64 {
        if r < cost.rows && c < cost.cols {
            cost.get(r, c)
        } else {
            0.0
        }
    };

    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = at(r0 - 1, col - 1) - u[r0] - v[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            row_of_col[col0] = row_of_col[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|col| {
            let row = row_of_col[col];
            (row >= 1 && row <= cost.rows && col <= cost.cols).then(|| (row - 1, col - 1))
        })
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Sum of the selected entries in pair order.
pub fn total_cost(cost: &CostMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| cost.get(r, c)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_optimum() {
        let m = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let p = solve(&m).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(total_cost(&m, &p), 2.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = CostMatrix::from_rows(&[vec![5.0, 1.0, 3.0]]).unwrap();
        assert_eq!(solve(&wide).unwrap(), vec![(0, 1)]);
        let tall = CostMatrix::from_rows(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(solve(&tall).unwrap(), vec![(1, 0)]);
    }

    #[test]
    fn empty_and_non_finite() {
        assert!(solve(&CostMatrix::new(0, 3, vec![]).unwrap()).unwrap().is_empty());
        let bad = CostMatrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(solve(&bad).is_err());
    }

    #[test]
    fn negative_costs() {
        let m = CostMatrix::from_rows(&[vec![-1.0, -10.0], vec![-10.0, -1.0]]).unwrap();
        assert_eq!(solve(&m).unwrap(), vec![(0, 1), (1, 0)]);
    }
}
