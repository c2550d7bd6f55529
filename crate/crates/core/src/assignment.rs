//! Rectangular min-cost assignment and Murty's K-best enumeration.
//!
//! Costs are negated log weights; `+inf` marks a forbidden pair.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, Error, Result};

const NONE: usize = usize::MAX;

/// Dense row-major cost matrix with `+inf` for forbidden entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(domain(format!("expected {} entries, got {}", rows * cols, data.len())));
        }
        if data.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(domain("costs must be finite or +inf"));
        }
        Ok(Self { rows, cols, data })
    }

    /// All entries forbidden.
    pub fn forbidden(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![f64::INFINITY; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(domain("ragged cost matrix"));
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

    /// Sets an entry. `NaN` and `-inf` are rejected.
    pub fn set(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(domain("costs must be finite or +inf"));
        }
        self.data[r * self.cols + c] = v;
        Ok(())
    }

    /// Sum of the selected entries, accumulated in row order.
    pub fn assignment_cost(&self, row_to_col: &[usize]) -> f64 {
        row_to_col.iter().enumerate().map(|(r, &c)| self.get(r, c)).sum()
    }
}

/// Row-to-column assignment with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub row_to_col: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    /// `true` when column `c` is used by some row.
    pub fn uses_col(&self, c: usize) -> bool {
        self.row_to_col.contains(&c)
    }

    fn order(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.row_to_col.cmp(&other.row_to_col))
    }
}

/// Square shortest-augmenting-path solver state with dual potentials.
///
/// Rectangular problems are padded with zero-cost dummy rows so every column
/// is matched, which keeps the duals valid for warm restarts.
#[derive(Debug, Clone)]
struct Lsap {
    n: usize,
    cost: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    col_of_row: Vec<usize>,
    row_of_col: Vec<usize>,
}

impl Lsap {
    fn padded(c: &CostMatrix) -> Self {
        let n = c.cols;
        let mut cost = vec![0.0; n * n];
        cost[..c.rows * n].copy_from_slice(&c.data);
        Self {
            n,
            cost,
            u: vec![0.0; n],
            v: vec![0.0; n],
            col_of_row: vec![NONE; n],
            row_of_col: vec![NONE; n],
        }
    }

    fn solve_all(&mut self) -> bool {
        (0..self.n).all(|r| self.augment(r))
    }

    /// Routes the free row `start` to a free column along a shortest
    /// reduced-cost path, then updates the duals.
    fn augment(&mut self, start: usize) -> bool {
        let n = self.n;
        let mut shortest = vec![f64::INFINITY; n];
        let mut path = vec![NONE; n];
        let mut seen_row = vec![false; n];
        let mut seen_col = vec![false; n];
        let mut remaining: Vec<usize> = (0..n).rev().collect();
        let mut min_val = 0.0;
        let mut row = start;
        let sink;
        loop {
            seen_row[row] = true;
            let mut lowest = f64::INFINITY;
            let mut best = NONE;
            let base = row * n;
            for (idx, &j) in remaining.iter().enumerate() {
                let r = min_val + self.cost[base + j] - self.u[row] - self.v[j];
                if r < shortest[j] {
                    path[j] = row;
                    shortest[j] = r;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && self.row_of_col[j] == NONE) {
                    lowest = shortest[j];
                    best = idx;
                }
            }
            min_val = lowest;
            if min_val == f64::INFINITY || best == NONE {
                return false;
            }
            let j = remaining.swap_remove(best);
            seen_col[j] = true;
            if self.row_of_col[j] == NONE {
                sink = j;
                break;
            }
            row = self.row_of_col[j];
        }
        self.u[start] += min_val;
        for i in 0..n {
            if seen_row[i] && i != start {
                self.u[i] += min_val - shortest[self.col_of_row[i]];
            }
        }
        for j in 0..n {
            if seen_col[j] {
                self.v[j] -= min_val - shortest[j];
            }
        }
        let mut j = sink;
        loop {
            let i = path[j];
            self.row_of_col[j] = i;
            let prev = self.col_of_row[i];
            self.col_of_row[i] = j;
            if i == start {
                break;
            }
            j = prev;
        }
        true
    }
}

/// Minimum-cost assignment of every row to a distinct column.
pub fn solve_min_cost(c: &CostMatrix) -> Result<Assignment> {
    if c.rows > c.cols {
        return Err(Error::Infeasible);
    }
    let mut lsap = Lsap::padded(c);
    if !lsap.solve_all() {
        return Err(Error::Infeasible);
    }
    let row_to_col = lsap.col_of_row[..c.rows].to_vec();
    let cost = c.assignment_cost(&row_to_col);
    if !cost.is_finite() {
        return Err(Error::Infeasible);
    }
    Ok(Assignment { row_to_col, cost })
}

struct Node {
    solution: Assignment,
    /// Rows `0..fixed` are forced to their current columns.
    fixed: usize,
    lsap: Lsap,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so the max-heap pops the cheapest node first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.solution.order(&self.solution)
    }
}

/// The `min(m, #feasible)` cheapest assignments in nondecreasing cost.
///
/// Ties are broken by the lexicographic order of `row_to_col`. An infeasible
/// problem yields an empty list.
pub fn murty_kbest(c: &CostMatrix, m: usize) -> Vec<Assignment> {
    let mut out = Vec::new();
    if m == 0 || c.rows > c.cols {
        return out;
    }
    let mut root = Lsap::padded(c);
    if !root.solve_all() {
        return out;
    }
    let row_to_col = root.col_of_row[..c.rows].to_vec();
    let cost = c.assignment_cost(&row_to_col);
    if !cost.is_finite() {
        return out;
    }
    let mut heap = BinaryHeap::new();
    heap.push(Node { solution: Assignment { row_to_col, cost }, fixed: 0, lsap: root });

    while let Some(node) = heap.pop() {
        out.push(node.solution.clone());
        if out.len() == m {
            break;
        }
        let n = node.lsap.n;
        let sol = &node.solution.row_to_col;
        // Child i keeps rows fixed..i at the parent's columns and forbids (i, sol[i]).
        let mut base = node.lsap.clone();
        for i in node.fixed..c.rows {
            let mut child = base.clone();
            let col = sol[i];
            child.cost[i * n + col] = f64::INFINITY;
            child.col_of_row[i] = NONE;
            child.row_of_col[col] = NONE;
            if child.augment(i) {
                let row_to_col = child.col_of_row[..c.rows].to_vec();
                let cost = c.assignment_cost(&row_to_col);
                if cost.is_finite() {
                    heap.push(Node { solution: Assignment { row_to_col, cost }, fixed: i, lsap: child });
                }
            }
            // Force (i, sol[i]) for the remaining siblings.
            for r in 0..n {
                if r != i {
                    base.cost[r * n + col] = f64::INFINITY;
                }
            }
        }
    }
    out
}
