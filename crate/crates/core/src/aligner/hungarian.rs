use serde::{Deserialize, Serialize};

/// Dense row-major score matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "matrix shape mismatch");
        SimilarityMatrix { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        SimilarityMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| f(i, j)).collect();
        SimilarityMatrix::new(rows, cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// One-to-one matching between matrix rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(row, col, score)`, sorted by row.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }

    fn from_pairs(matrix: &SimilarityMatrix, mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        let mut row_used = vec![false; matrix.rows()];
        let mut col_used = vec![false; matrix.cols()];
        for &(r, c) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Assignment {
            pairs: pairs.into_iter().map(|(r, c)| (r, c, matrix.get(r, c))).collect(),
            unmatched_rows: (0..matrix.rows()).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..matrix.cols()).filter(|&c| !col_used[c]).collect(),
        }
    }
}

/// Above this many pairs the lexicographic tie-break pass is skipped and the
/// solver's own (still deterministic) optimum is returned.
const TIE_BREAK_LIMIT: usize = 40;

/// Maximum-total-score assignment pairing `min(rows, cols)` rows and columns.
///
/// Among optimal assignments the lexicographically smallest `(row, col)`
/// pair list is returned.
pub fn hungarian_max(matrix: &SimilarityMatrix) -> Assignment {
    let (r, c) = (matrix.rows(), matrix.cols());
    if r == 0 || c == 0 {
        return Assignment::from_pairs(matrix, Vec::new());
    }
    let all_rows: Vec<usize> = (0..r).collect();
    let all_cols: Vec<usize> = (0..c).collect();
    let (best, direct) = solve_max(matrix, &all_rows, &all_cols);
    if r.min(c) > TIE_BREAK_LIMIT {
        return Assignment::from_pairs(matrix, direct);
    }

    let tol = 1e-9 * best.abs().max(1.0);
    let mut pairs = Vec::with_capacity(r.min(c));
    let mut cols_left = all_cols;
    let mut remaining = best;
    let mut needed = r.min(c);
    for i in 0..r {
        if needed == 0 {
            break;
        }
        let rows_after: Vec<usize> = (i + 1..r).collect();
        let mut placed = None;
        if rows_after.len() + 1 >= needed {
            for (k, &j) in cols_left.iter().enumerate() {
                let rest_cols: Vec<usize> = cols_left.iter().copied().filter(|&x| x != j).collect();
                let rest = if needed == 1 {
                    0.0
                } else {
                    solve_max(matrix, &rows_after, &rest_cols).0
                };
                let value = matrix.get(i, j) + rest;
                if (value - remaining).abs() <= tol {
                    placed = Some((k, j, rest));
                    break;
                }
            }
        }
        if let Some((k, j, rest)) = placed {
            pairs.push((i, j));
            cols_left.remove(k);
            remaining = rest;
            needed -= 1;
        }
    }
    if needed != 0 {
        // numerical trouble; fall back to the direct optimum
        log::warn!("tie-break pass incomplete, using direct assignment");
        return Assignment::from_pairs(matrix, direct);
    }
    Assignment::from_pairs(matrix, pairs)
}

/// Optimum over a sub-matrix; returns the total and the chosen pairs in
/// original indices.
fn solve_max(matrix: &SimilarityMatrix, rows: &[usize], cols: &[usize]) -> (f64, Vec<(usize, usize)>) {
    if rows.is_empty() || cols.is_empty() {
        return (0.0, Vec::new());
    }
    let pairs: Vec<(usize, usize)> = if rows.len() <= cols.len() {
        solve_min(rows.len(), cols.len(), |i, j| -matrix.get(rows[i], cols[j]))
            .into_iter()
            .enumerate()
            .map(|(i, j)| (rows[i], cols[j]))
            .collect()
    } else {
        solve_min(cols.len(), rows.len(), |j, i| -matrix.get(rows[i], cols[j]))
            .into_iter()
            .enumerate()
            .map(|(j, i)| (rows[i], cols[j]))
            .collect()
    };
    let total = pairs.iter().map(|&(r, c)| matrix.get(r, c)).sum();
    (total, pairs)
}

/// Shortest-augmenting-path Hungarian method with potentials, O(n²m).
/// Requires `n <= m`; returns the column assigned to each row.
fn solve_min(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    // 1-based with index 0 as the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
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
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
