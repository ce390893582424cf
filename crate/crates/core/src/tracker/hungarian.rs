//! Minimum-cost bipartite assignment with forbidden pairs.

/// Dense cost matrix; `None` marks an infeasible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Option<f64>>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![None; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        CostMatrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, cost: Option<f64>) {
        self.data[r * self.cols + c] = cost;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Matching {
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.pairs
            .iter()
            .map(|&(r, c)| costs.get(r, c).expect("matched pairs are feasible"))
            .sum()
    }
}

/// Shortest augmenting path Hungarian algorithm (potentials form), `O(n² m)`
/// for `n <= m`. Rows are inserted in index order and ties between columns go
/// to the lowest index, so the result is deterministic.
///
/// Infeasible pairs are priced above the sum of all feasible costs, so the
/// result has the largest possible number of feasible pairs and, among those,
/// the least total cost. Pairs that end up on an infeasible entry are
/// reported unmatched.
pub fn hungarian_assign(costs: &CostMatrix) -> Matching {
    let (n_rows, n_cols) = (costs.rows, costs.cols);
    if n_rows == 0 || n_cols == 0 {
        return Matching {
            pairs: Vec::new(),
            unmatched_rows: (0..n_rows).collect(),
            unmatched_cols: (0..n_cols).collect(),
        };
    }
    let feasible_total: f64 = costs.data.iter().flatten().map(|c| c.abs()).sum();
    let forbidden = 2.0 * feasible_total + 1.0;
    let transpose = n_rows > n_cols;
    let (n, m) = if transpose { (n_cols, n_rows) } else { (n_rows, n_cols) };
    let cost = |i: usize, j: usize| -> f64 {
        let c = if transpose { costs.get(j, i) } else { costs.get(i, j) };
        c.unwrap_or(forbidden)
    };

    // 1-based arrays; index 0 is the virtual source column
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
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

    let mut pairs = Vec::new();
    for (j, &i) in owner.iter().enumerate().skip(1) {
        if i == 0 {
            continue;
        }
        let (r, c) = if transpose { (j - 1, i - 1) } else { (i - 1, j - 1) };
        if costs.get(r, c).is_some() {
            pairs.push((r, c));
        }
    }
    pairs.sort_unstable();
    let mut row_used = vec![false; n_rows];
    let mut col_used = vec![false; n_cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Matching {
        unmatched_rows: (0..n_rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..n_cols).filter(|&c| !col_used[c]).collect(),
        pairs,
    }
}
