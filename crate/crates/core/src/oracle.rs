//! Exhaustive enumeration on finite state spaces, used to verify the smoothing
//! identities for sets of trajectories exactly.
//!
//! The model is the standard multitarget model (independent survival and motion,
//! Poisson birth) conditioned on every time step holding at most `max_present`
//! targets in pairwise distinct states. The condition is a product of per-step
//! indicators, so the process stays Markov in the multitarget state and every
//! trajectory set is recovered uniquely from its restrictions.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::trajectory::{Trajectory, TrajectorySet};

/// Largest number of sets any enumeration may produce.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// Finite-state multitarget model with categorical observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteModel {
    pub states: usize,
    pub horizon: usize,
    /// Most targets allowed at any one time step.
    pub max_present: usize,
    /// Row-stochastic `transition[from][to]`.
    pub transition: Vec<Vec<f64>>,
    pub survival: f64,
    /// Poisson birth intensity per state, for steps after the first.
    pub birth: Vec<f64>,
    /// Intensity at the first step; defaults to `birth`.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// Condition on at least this many targets at the first step.
    #[serde(default)]
    pub initial_min_count: usize,
    pub detection: f64,
    /// `emission[state][symbol]`, each row a categorical distribution.
    pub emission: Vec<Vec<f64>>,
    pub clutter_rate: f64,
    /// Clutter categorical over the symbol alphabet.
    pub clutter: Vec<f64>,
}

/// Per-step scans: `None` means no scan; `Some(symbols)` is a multiset of symbols.
pub type Observations = Vec<Option<Vec<usize>>>;

/// Limits for [`enumerate_trajectory_sets`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnumerationLimits {
    pub max_total: Option<usize>,
    pub max_present: Option<usize>,
    pub distinct_states: bool,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(domain(format!("{what} must be a probability vector")));
    }
    Ok(())
}

impl DiscreteModel {
    pub fn validate(&self) -> Result<()> {
        let s = self.states;
        if s == 0 || s > 8 || self.horizon == 0 || self.horizon > 6 || self.max_present == 0 {
            return Err(domain("need 1 <= states <= 8, 1 <= horizon <= 6 and max_present >= 1"));
        }
        if self.transition.len() != s || self.transition.iter().any(|r| r.len() != s) {
            return Err(domain("transition must be states x states"));
        }
        for row in &self.transition {
            check_distribution(row, "each transition row")?;
        }
        let intensity_ok = |v: &[f64]| v.len() == s && v.iter().all(|x| *x >= 0.0 && x.is_finite());
        if !intensity_ok(&self.birth) || !self.initial.as_deref().is_none_or(intensity_ok) {
            return Err(domain("birth and initial intensities need one nonnegative entry per state"));
        }
        if !(0.0..=1.0).contains(&self.survival) || !(0.0..=1.0).contains(&self.detection) {
            return Err(domain("survival and detection probabilities must lie in [0, 1]"));
        }
        if self.emission.len() != s || self.emission.iter().any(|r| r.len() != self.clutter.len()) {
            return Err(domain("emission must be states x symbols with as many symbols as the clutter distribution"));
        }
        for row in &self.emission {
            check_distribution(row, "each emission row")?;
        }
        check_distribution(&self.clutter, "clutter")?;
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return Err(domain("clutter rate must be finite and nonnegative"));
        }
        Ok(())
    }

    fn initial_intensity(&self) -> &[f64] {
        self.initial.as_deref().unwrap_or(&self.birth)
    }

    /// Poisson intensity of one trajectory on the horizon.
    fn trajectory_intensity(&self, t: &DiscreteTrajectory) -> f64 {
        let lambda = if t.birth == 1 { self.initial_intensity() } else { &self.birth };
        let mut w = lambda[t.states[0] as usize];
        for pair in t.states.windows(2) {
            w *= self.survival * self.transition[pair[0] as usize][pair[1] as usize];
        }
        if t.end() < self.horizon {
            w *= 1.0 - self.survival;
        }
        w
    }

    fn alphabet(&self) -> usize {
        self.clutter.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct DiscreteTrajectory {
    birth: usize,
    states: Vec<u8>,
}

impl DiscreteTrajectory {
    fn end(&self) -> usize {
        self.birth + self.states.len() - 1
    }

    fn state_at(&self, k: usize) -> Option<u8> {
        (k >= self.birth && k <= self.end()).then(|| self.states[k - self.birth])
    }

    fn to_trajectory(&self) -> Trajectory {
        Trajectory { birth_time: self.birth, states: self.states.iter().map(|s| DVector::from_element(1, *s as f64)).collect() }
    }
}

/// All trajectories on `1..=horizon`, with restriction lookups.
struct TrajectoryTable {
    horizon: usize,
    items: Vec<DiscreteTrajectory>,
    index: HashMap<DiscreteTrajectory, u32>,
}

impl TrajectoryTable {
    fn new(states: usize, horizon: usize) -> Self {
        let mut items = Vec::new();
        for birth in 1..=horizon {
            for len in 1..=horizon - birth + 1 {
                let count = states.pow(len as u32);
                for code in 0..count {
                    let mut c = code;
                    let mut seq = vec![0u8; len];
                    for slot in seq.iter_mut().rev() {
                        *slot = (c % states) as u8;
                        c /= states;
                    }
                    items.push(DiscreteTrajectory { birth, states: seq });
                }
            }
        }
        let index = items.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { horizon, items, index }
    }

    fn restrict(&self, id: u32, a: usize, b: usize) -> Option<u32> {
        let t = &self.items[id as usize];
        let (start, end) = (t.birth.max(a), t.end().min(b));
        if start > end {
            return None;
        }
        let cut = DiscreteTrajectory { birth: start, states: t.states[start - t.birth..=end - t.birth].to_vec() };
        Some(self.index[&cut])
    }

    fn restrict_set(&self, set: &[u32], a: usize, b: usize) -> Vec<u32> {
        let mut out: Vec<u32> = set.iter().filter_map(|&id| self.restrict(id, a, b)).collect();
        out.sort_unstable();
        out
    }
}

fn binomial_sum_bound(n: u64, kmax: u64) -> u64 {
    let mut total: u64 = 0;
    let mut term: u64 = 1;
    for k in 0..=kmax.min(n) {
        total = total.saturating_add(term);
        term = term.saturating_mul(n - k) / (k + 1);
    }
    total
}

/// Index sets over `table` satisfying `limits`.
fn enumerate_ids(table: &TrajectoryTable, limits: &EnumerationLimits) -> Result<Vec<Vec<u32>>> {
    let n = table.items.len() as u64;
    let per_step = limits.max_present.map_or(n, |m| m as u64);
    let kmax = limits.max_total.map_or(n, |m| m as u64).min(per_step.saturating_mul(table.horizon as u64));
    let bound = binomial_sum_bound(n, kmax);

    struct Walk<'a> {
        table: &'a TrajectoryTable,
        limits: &'a EnumerationLimits,
        occupied: Vec<u16>,
        present: Vec<usize>,
        current: Vec<u32>,
        out: Vec<Vec<u32>>,
    }
    impl Walk<'_> {
        fn fits(&self, t: &DiscreteTrajectory) -> bool {
            (t.birth..=t.end()).all(|k| {
                let bit = 1u16 << t.states[k - t.birth];
                (!self.limits.distinct_states || self.occupied[k] & bit == 0)
                    && self.limits.max_present.is_none_or(|m| self.present[k] < m)
            })
        }
        fn go(&mut self, from: usize) -> bool {
            if self.out.len() as u64 >= ENUMERATION_CAP {
                return false;
            }
            self.out.push(self.current.clone());
            if self.limits.max_total.is_some_and(|m| self.current.len() >= m) {
                return true;
            }
            for id in from..self.table.items.len() {
                let t = &self.table.items[id];
                if !self.fits(t) {
                    continue;
                }
                for k in t.birth..=t.end() {
                    self.occupied[k] |= 1 << t.states[k - t.birth];
                    self.present[k] += 1;
                }
                self.current.push(id as u32);
                let ok = self.go(id + 1);
                self.current.pop();
                for k in t.birth..=t.end() {
                    self.occupied[k] &= !(1 << t.states[k - t.birth]);
                    self.present[k] -= 1;
                }
                if !ok {
                    return false;
                }
            }
            true
        }
    }
    let mut walk = Walk {
        table,
        limits,
        occupied: vec![0; table.horizon + 1],
        present: vec![0; table.horizon + 1],
        current: Vec::new(),
        out: Vec::new(),
    };
    if !walk.go(0) {
        return Err(Error::EnumerationCap { estimated: bound.max(ENUMERATION_CAP + 1), cap: ENUMERATION_CAP });
    }
    Ok(walk.out)
}

/// Every set of trajectories with states in `0..states` on `1..=horizon` within `limits`.
pub fn enumerate_trajectory_sets(states: usize, horizon: usize, limits: &EnumerationLimits) -> Result<Vec<TrajectorySet>> {
    if states == 0 || states > 8 || horizon == 0 || horizon > 6 {
        return Err(domain("need 1 <= states <= 8 and 1 <= horizon <= 6"));
    }
    let table = TrajectoryTable::new(states, horizon);
    let ids = enumerate_ids(&table, limits)?;
    Ok(ids
        .iter()
        .map(|set| TrajectorySet::from_vec_unchecked(set.iter().map(|&i| table.items[i as usize].to_trajectory()).collect()))
        .collect())
}

fn poisson_pmf(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut p = (-mean).exp();
    for i in 1..=n {
        p *= mean / i as f64;
    }
    p
}

/// Probability of the symbol counts given targets in `states`.
fn scan_likelihood(model: &DiscreteModel, states: &[u8], counts: &mut [usize]) -> f64 {
    match states.split_first() {
        None => counts
            .iter()
            .zip(&model.clutter)
            .map(|(&n, c)| poisson_pmf(n, model.clutter_rate * c))
            .product(),
        Some((&s, rest)) => {
            let mut total = (1.0 - model.detection) * scan_likelihood(model, rest, counts);
            for a in 0..counts.len() {
                let w = model.emission[s as usize][a];
                if counts[a] > 0 && w > 0.0 && model.detection > 0.0 {
                    counts[a] -= 1;
                    total += model.detection * w * scan_likelihood(model, rest, counts);
                    counts[a] += 1;
                }
            }
            total
        }
    }
}

/// Enumerated support with prior weights and per-prefix posteriors.
struct Space {
    table: TrajectoryTable,
    sets: Vec<Vec<u32>>,
    /// `posteriors[m][i]`: probability of set `i` given scans `1..=m`.
    posteriors: Vec<Vec<f64>>,
    truncation_mass: f64,
}

impl Space {
    fn new(model: &DiscreteModel, obs: &Observations) -> Result<Self> {
        model.validate()?;
        let horizon = model.horizon;
        if obs.len() != horizon {
            return Err(domain(format!("expected {horizon} scans, got {}", obs.len())));
        }
        let alphabet = model.alphabet();
        if obs.iter().flatten().flatten().any(|&a| a >= alphabet) {
            return Err(domain("observed symbol outside the alphabet"));
        }
        let table = TrajectoryTable::new(model.states, horizon);
        let limits = EnumerationLimits { max_total: None, max_present: Some(model.max_present), distinct_states: true };
        let sets: Vec<Vec<u32>> = enumerate_ids(&table, &limits)?
            .into_iter()
            .filter(|set| set.iter().filter(|&&i| table.items[i as usize].birth == 1).count() >= model.initial_min_count)
            .collect();
        let intensity: Vec<f64> = table.items.iter().map(|t| model.trajectory_intensity(t)).collect();
        let prior: Vec<f64> = sets.iter().map(|s| s.iter().map(|&i| intensity[i as usize]).product()).collect();
        let total_intensity: f64 = intensity.iter().sum();
        let kept: f64 = prior.iter().sum::<f64>() * (-total_intensity).exp();
        let truncation_mass = (1.0 - kept).max(0.0);

        let mut cache: HashMap<(usize, Vec<u8>), f64> = HashMap::new();
        let mut weights = prior.clone();
        let mut posteriors = Vec::with_capacity(horizon + 1);
        posteriors.push(normalize(&weights)?);
        for k in 1..=horizon {
            if let Some(scan) = &obs[k - 1] {
                let mut counts = vec![0usize; alphabet];
                for &a in scan {
                    counts[a] += 1;
                }
                for (w, set) in weights.iter_mut().zip(&sets) {
                    let mut present: Vec<u8> = set.iter().filter_map(|&i| table.items[i as usize].state_at(k)).collect();
                    present.sort_unstable();
                    let l = *cache
                        .entry((k, present.clone()))
                        .or_insert_with(|| scan_likelihood(model, &present, &mut counts.clone()));
                    *w *= l;
                }
            }
            posteriors.push(normalize(&weights)?);
        }
        Ok(Self { table, sets, posteriors, truncation_mass })
    }

    /// Marginal of `posteriors[m]` on the interval `[a, b]`.
    fn marginal(&self, m: usize, a: usize, b: usize) -> HashMap<Vec<u32>, f64> {
        let mut out = HashMap::new();
        for (set, p) in self.sets.iter().zip(&self.posteriors[m]) {
            *out.entry(self.table.restrict_set(set, a, b)).or_insert(0.0) += p;
        }
        out
    }

    fn restrictions(&self, a: usize, b: usize) -> Vec<Vec<u32>> {
        let mut keys: Vec<Vec<u32>> = self.sets.iter().map(|s| self.table.restrict_set(s, a, b)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }
}

fn normalize(w: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("observations have zero total likelihood".into()));
    }
    Ok(w.iter().map(|x| x / total).collect())
}

/// Posterior probability of every enumerated set given all scans.
pub fn exact_posterior(model: &DiscreteModel, obs: &Observations) -> Result<Vec<(TrajectorySet, f64)>> {
    let space = Space::new(model, obs)?;
    let last = &space.posteriors[model.horizon];
    Ok(space
        .sets
        .iter()
        .zip(last)
        .map(|(set, &p)| {
            let ts = set.iter().map(|&i| space.table.items[i as usize].to_trajectory()).collect();
            (TrajectorySet::from_vec_unchecked(ts), p)
        })
        .collect())
}

/// Largest absolute gap between the smoothed density on `[k, K]` and the product of the
/// predicted density on `[k, k+1]` with the smoothed density on `[k+1, K]`, divided by
/// the predicted multitarget density at `k + 1`, over all sets and `k`.
fn smoothing_gap(space: &Space, horizon: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..horizon {
        let smoothed_k = space.marginal(horizon, k, horizon);
        let smoothed_next = space.marginal(horizon, k + 1, horizon);
        let predicted = space.marginal(k, k, k + 1);
        let predicted_states = space.marginal(k, k + 1, k + 1);
        for key in space.restrictions(k, horizon) {
            let lhs = smoothed_k.get(&key).copied().unwrap_or(0.0);
            let pair = space.table.restrict_set(&key, k, k + 1);
            let future = space.table.restrict_set(&key, k + 1, horizon);
            let states = space.table.restrict_set(&key, k + 1, k + 1);
            let f = predicted_states.get(&states).copied().unwrap_or(0.0);
            let rhs = if f > 0.0 {
                predicted.get(&pair).copied().unwrap_or(0.0) * smoothed_next.get(&future).copied().unwrap_or(0.0) / f
            } else {
                0.0
            };
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Largest relative gap in the ratio identity for predicted densities given scans up to
/// `k`, over `k < gamma <= K`, wherever both denominators exceed `1e-12`.
fn ratio_gap(space: &Space, horizon: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 1..horizon {
        let pair = space.marginal(k, k, k + 1);
        let states = space.marginal(k, k + 1, k + 1);
        for gamma in k + 1..=horizon {
            let long = space.marginal(k, k, gamma);
            let short = space.marginal(k, k + 1, gamma);
            for key in space.restrictions(k, gamma) {
                let d1 = short.get(&space.table.restrict_set(&key, k + 1, gamma)).copied().unwrap_or(0.0);
                let d2 = states.get(&space.table.restrict_set(&key, k + 1, k + 1)).copied().unwrap_or(0.0);
                if d1 <= 1e-12 || d2 <= 1e-12 {
                    continue;
                }
                let lhs = long.get(&key).copied().unwrap_or(0.0) / d1;
                let rhs = pair.get(&space.table.restrict_set(&key, k, k + 1)).copied().unwrap_or(0.0) / d2;
                let scale = lhs.abs().max(rhs.abs());
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
    }
    worst
}

/// Multi-step prediction factor taking a density on `[1, eta]` to `[1, gamma]`.
fn prediction_factor(model: &DiscreteModel, table: &TrajectoryTable, set: &[u32], eta: usize, gamma: usize) -> f64 {
    let total_birth: f64 = model.birth.iter().sum();
    let ps = model.survival;
    let mut w = (-((gamma - eta) as f64) * total_birth).exp();
    for &id in set {
        let t = &table.items[id as usize];
        let first = if t.birth > eta {
            w *= model.birth[t.states[0] as usize];
            t.birth
        } else if t.end() >= eta {
            eta
        } else {
            continue;
        };
        for k in first..t.end() {
            w *= model.transition[t.states[k - t.birth] as usize][t.states[k + 1 - t.birth] as usize] * ps;
        }
        if t.end() != gamma {
            w *= 1.0 - ps;
        }
    }
    w
}

/// Largest relative gap between the direct two-step prediction and two composed
/// one-step predictions, from the posterior on `[1, eta]` given scans `1..=eta`.
fn prediction_gap(model: &DiscreteModel, space: &Space, horizon: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for eta in 1..horizon.saturating_sub(1) {
        let gamma = eta + 2;
        let base = space.marginal(eta, 1, eta);
        for key in space.restrictions(1, gamma) {
            let head = space.table.restrict_set(&key, 1, eta);
            let middle = space.table.restrict_set(&key, 1, eta + 1);
            let p = base.get(&head).copied().unwrap_or(0.0);
            let direct = p * prediction_factor(model, &space.table, &key, eta, gamma);
            let composed = p
                * prediction_factor(model, &space.table, &middle, eta, eta + 1)
                * prediction_factor(model, &space.table, &key, eta + 1, gamma);
            let scale = direct.abs().max(composed.abs());
            if scale > 0.0 {
                worst = worst.max((direct - composed).abs() / scale);
            }
        }
    }
    worst
}

pub fn check_smoothing_identity(model: &DiscreteModel, obs: &Observations) -> Result<f64> {
    Ok(smoothing_gap(&Space::new(model, obs)?, model.horizon))
}

pub fn check_ratio_identity(model: &DiscreteModel, obs: &Observations) -> Result<f64> {
    Ok(ratio_gap(&Space::new(model, obs)?, model.horizon))
}

pub fn check_prediction_identity(model: &DiscreteModel, obs: &Observations) -> Result<f64> {
    Ok(prediction_gap(model, &Space::new(model, obs)?, model.horizon))
}

/// Prior probability, under the unconditioned Poisson model, of configurations the
/// enumeration excludes.
pub fn truncation_mass(model: &DiscreteModel) -> Result<f64> {
    Ok(Space::new(model, &vec![None; model.horizon])?.truncation_mass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInstance {
    pub name: String,
    pub model: DiscreteModel,
    pub observations: Observations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub sets: usize,
    pub smoothing_gap: f64,
    pub ratio_gap: f64,
    pub prediction_gap: f64,
    pub truncation_mass: f64,
}

pub fn run_instance(instance: &OracleInstance) -> Result<OracleReport> {
    let space = Space::new(&instance.model, &instance.observations)?;
    let h = instance.model.horizon;
    Ok(OracleReport {
        name: instance.name.clone(),
        sets: space.sets.len(),
        smoothing_gap: smoothing_gap(&space, h),
        ratio_gap: ratio_gap(&space, h),
        prediction_gap: prediction_gap(&instance.model, &space, h),
        truncation_mass: space.truncation_mass,
    })
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Instances exercised by the acceptance suite and the `oracle-check` command.
pub fn shipped_instances() -> Vec<OracleInstance> {
    let two_state = |survival: f64, birth: Vec<f64>, max_present: usize, horizon: usize| DiscreteModel {
        states: 2,
        horizon,
        max_present,
        transition: vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        survival,
        birth,
        initial: None,
        initial_min_count: 0,
        detection: 0.8,
        emission: vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6]],
        clutter_rate: 0.5,
        clutter: uniform(3),
    };
    let three_state = |horizon: usize| DiscreteModel {
        states: 3,
        horizon,
        max_present: 2,
        transition: vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.2, 0.7]],
        survival: 0.85,
        birth: vec![0.2, 0.1, 0.15],
        initial: Some(vec![0.5, 0.3, 0.2]),
        initial_min_count: 0,
        detection: 0.75,
        emission: vec![vec![0.8, 0.15, 0.05], vec![0.1, 0.8, 0.1], vec![0.05, 0.15, 0.8]],
        clutter_rate: 0.3,
        clutter: vec![0.5, 0.3, 0.2],
    };
    vec![
        OracleInstance {
            name: "s2-k2-n1".into(),
            model: two_state(0.9, vec![0.3, 0.2], 1, 2),
            observations: vec![Some(vec![0]), Some(vec![0, 2])],
        },
        OracleInstance {
            name: "s2-k3-n2-birth-death".into(),
            model: two_state(0.8, vec![0.25, 0.15], 2, 3),
            observations: vec![Some(vec![0]), Some(vec![0, 2]), Some(vec![2])],
        },
        OracleInstance {
            name: "s2-k3-n2-missing-scan".into(),
            model: two_state(0.9, vec![0.1, 0.3], 2, 3),
            observations: vec![Some(vec![1, 2]), None, Some(vec![])],
        },
        OracleInstance {
            name: "s3-k2-n2".into(),
            model: three_state(2),
            observations: vec![Some(vec![0, 1]), Some(vec![1])],
        },
        OracleInstance {
            name: "s3-k3-n2".into(),
            model: three_state(3),
            observations: vec![Some(vec![0, 2]), Some(vec![1, 2]), Some(vec![2])],
        },
        OracleInstance {
            name: "s1-k3-n1-forced".into(),
            model: DiscreteModel {
                states: 1,
                horizon: 3,
                max_present: 1,
                transition: vec![vec![1.0]],
                survival: 1.0,
                birth: vec![0.0],
                initial: Some(vec![0.4]),
                initial_min_count: 1,
                detection: 0.6,
                emission: vec![vec![0.9, 0.1]],
                clutter_rate: 0.2,
                clutter: uniform(2),
            },
            observations: vec![Some(vec![0]), Some(vec![]), Some(vec![1])],
        },
    ]
}
