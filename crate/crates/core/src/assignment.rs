//! Rectangular minimum-cost assignment.
//!
//! The solver is the shortest-augmenting-path formulation of the Hungarian
//! algorithm (Jonker-Volgenant style) with row/column potentials, O(n^2 m).
//! It computes a full matching of the smaller side; forbidden pairs carry a
//! large finite sentinel cost and are stripped from the result afterwards,
//! so a degenerate matrix can still be solved.
//!
//! Scan order is fixed (ascending indices, strict improvement), which makes
//! tie-breaking deterministic for every caller.

/// Dense rectangular cost matrix. Rows index detections, columns index
/// tracks (or whatever the caller matches). Entries equal to `sentinel`
/// mark forbidden pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    sentinel: f64,
}

/// Default forbidden-pair cost, mirroring "a very large penalty".
pub const DEFAULT_SENTINEL: f64 = 1e12;

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, sentinel: f64) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            sentinel,
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        sentinel: f64,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Self {
        let mut m = Self::new(rows, cols, sentinel);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sentinel(&self) -> f64 {
        self.sentinel
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn set_sentinel(&mut self, r: usize, c: usize) {
        self.data[r * self.cols + c] = self.sentinel;
    }

    pub fn is_sentinel(&self, r: usize, c: usize) -> bool {
        self.get(r, c) >= self.sentinel
    }
}

/// Minimum-total-cost matching of the smaller side of `m`, with
/// sentinel-cost pairs discarded after solving. Pairs are returned as
/// (row, column), sorted by row.
pub fn solve_assignment(m: &CostMatrix) -> Vec<(usize, usize)> {
    let mut pairs = solve_full(m);
    pairs.retain(|&(r, c)| !m.is_sentinel(r, c));
    pairs.sort_unstable();
    pairs
}

/// Full-cardinality optimal matching, sentinel pairs included.
pub fn solve_full(m: &CostMatrix) -> Vec<(usize, usize)> {
    if m.rows == 0 || m.cols == 0 {
        return Vec::new();
    }
    if m.rows <= m.cols {
        lapjv(m.rows, m.cols, |r, c| m.get(r, c))
    } else {
        let mut pairs = lapjv(m.cols, m.rows, |r, c| m.get(c, r));
        for p in &mut pairs {
            *p = (p.1, p.0);
        }
        pairs
    }
}

/// Shortest-augmenting-path assignment for `n <= m`. Returns (row, col)
/// pairs covering every row.
fn lapjv(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    // col_row[j] = row currently assigned to column j; column `m` is the
    // virtual root used while growing an augmenting path.
    let mut row_pot = vec![0.0f64; n];
    let mut col_pot = vec![0.0f64; m + 1];
    let mut col_row = vec![usize::MAX; m + 1];
    let mut way = vec![0usize; m];

    for start_row in 0..n {
        col_row[m] = start_row;
        let mut j0 = m;
        let mut min_to = vec![f64::INFINITY; m];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = col_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = usize::MAX;
            for j in 0..m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0, j) - row_pot[i0] - col_pot[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            debug_assert!(j1 != usize::MAX, "augmenting path must find a column");
            for j in 0..=m {
                if used[j] {
                    if col_row[j] != usize::MAX {
                        row_pot[col_row[j]] += delta;
                    }
                    col_pot[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if col_row[j0] == usize::MAX {
                break;
            }
        }
        // Augment along the recorded path back to the virtual root.
        loop {
            let j1 = way[j0];
            col_row[j0] = col_row[j1];
            j0 = j1;
            if j0 == m {
                break;
            }
        }
    }

    let mut pairs = Vec::with_capacity(n);
    for (j, &row) in col_row.iter().take(m).enumerate() {
        if row != usize::MAX {
            pairs.push((row, j));
        }
    }
    pairs
}
