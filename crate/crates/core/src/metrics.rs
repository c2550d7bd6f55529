//! GOSPA with its decomposition, and a per-step track-switch surrogate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_min_cost, CostMatrix};
use crate::trajectory::TrajectorySet;

/// GOSPA with `alpha = 2`. The three parts are in units of distance to the power `p`;
/// `total` is their sum raised to `1 / p`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GospaResult {
    pub total: f64,
    pub localization: f64,
    pub missed: f64,
    pub false_: f64,
}

/// Optimal pairs `(estimate index, truth index)` with distance below `c`.
fn gospa_pairs(estimate: &[DVector<f64>], truth: &[DVector<f64>], c: f64, p: f64) -> Vec<(usize, usize, f64)> {
    if estimate.is_empty() || truth.is_empty() {
        return Vec::new();
    }
    let (rows, cols, flip) =
        if estimate.len() <= truth.len() { (estimate, truth, false) } else { (truth, estimate, true) };
    let dist = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm();
    let data = rows.iter().flat_map(|a| cols.iter().map(move |b| dist(a, b).min(c).powf(p))).collect();
    let m = CostMatrix::new(rows.len(), cols.len(), data).expect("finite costs");
    let a = solve_min_cost(&m).expect("dense matrix with rows <= cols is feasible");
    a.row_to_col
        .iter()
        .enumerate()
        .filter_map(|(r, &col)| {
            let d = dist(&rows[r], &cols[col]);
            (d < c).then(|| if flip { (col, r, d) } else { (r, col, d) })
        })
        .collect()
}

/// GOSPA between two point sets with cutoff `c`, order `p` and `alpha = 2`.
pub fn gospa(estimate: &[DVector<f64>], truth: &[DVector<f64>], c: f64, p: f64) -> GospaResult {
    assert!(c > 0.0 && p >= 1.0, "GOSPA needs c > 0 and p >= 1");
    let pairs = gospa_pairs(estimate, truth, c, p);
    let localization: f64 = pairs.iter().map(|(_, _, d)| d.powf(p)).sum();
    let half = c.powf(p) / 2.0;
    let missed = half * (truth.len() - pairs.len()) as f64;
    let false_ = half * (estimate.len() - pairs.len()) as f64;
    let sum = localization + missed + false_;
    let total = if p == 1.0 { sum } else { sum.powf(1.0 / p) };
    GospaResult { total, localization, missed, false_ }
}

/// The first `dims` coordinates of each state.
pub fn positions(states: &[DVector<f64>], dims: usize) -> Vec<DVector<f64>> {
    states.iter().map(|x| x.rows(0, dims).into_owned()).collect()
}

/// Switches per step `k = 1..=horizon` (index `k - 1`). A truth switches at `k` if it is
/// paired at `k - 1` and `k` with different estimate trajectories. Pairings are GOSPA
/// optimal on the first `dims` coordinates with cutoff `c`.
pub fn track_switches_per_step(
    estimate: &TrajectorySet,
    truth: &TrajectorySet,
    c: f64,
    dims: usize,
    horizon: usize,
) -> Vec<usize> {
    let mut previous: Vec<Option<usize>> = vec![None; truth.len()];
    let mut out = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let (ei, ep): (Vec<usize>, Vec<DVector<f64>>) = estimate
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.state_at(k).map(|x| (i, x.rows(0, dims).into_owned())))
            .unzip();
        let (ti, tp): (Vec<usize>, Vec<DVector<f64>>) = truth
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.state_at(k).map(|x| (i, x.rows(0, dims).into_owned())))
            .unzip();
        let mut current: Vec<Option<usize>> = vec![None; truth.len()];
        for (e, t, _) in gospa_pairs(&ep, &tp, c, 1.0) {
            current[ti[t]] = Some(ei[e]);
        }
        let switches = previous
            .iter()
            .zip(&current)
            .filter(|(a, b)| matches!((a, b), (Some(x), Some(y)) if x != y))
            .count();
        out.push(switches);
        previous = current;
    }
    out
}

/// Total number of switches over `1..=horizon`.
pub fn track_switches(estimate: &TrajectorySet, truth: &TrajectorySet, c: f64, dims: usize, horizon: usize) -> usize {
    track_switches_per_step(estimate, truth, c, dims, horizon).iter().sum()
}
