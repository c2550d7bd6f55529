//! Trajectories and sets of trajectories.

use std::cmp::Ordering;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// A single target path: a 1-based birth time and a contiguous state sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub birth_time: usize,
    pub states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(birth_time: usize, states: Vec<DVector<f64>>) -> Result<Self> {
        if birth_time == 0 {
            return Err(domain("time steps are 1-based"));
        }
        let Some(first) = states.first() else {
            return Err(domain("a trajectory needs at least one state"));
        };
        if states.iter().any(|s| s.len() != first.len()) {
            return Err(domain("trajectory states differ in dimension"));
        }
        Ok(Self { birth_time, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Last time step at which the target is present.
    pub fn end_time(&self) -> usize {
        self.birth_time + self.states.len() - 1
    }

    pub fn is_present_at(&self, k: usize) -> bool {
        self.birth_time <= k && k <= self.end_time()
    }

    pub fn state_at(&self, k: usize) -> Option<&DVector<f64>> {
        if self.is_present_at(k) {
            self.states.get(k - self.birth_time)
        } else {
            None
        }
    }

    /// Total order used to canonicalize set iteration.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.birth_time
            .cmp(&other.birth_time)
            .then(self.states.len().cmp(&other.states.len()))
            .then_with(|| {
                for (a, b) in self.states.iter().zip(&other.states) {
                    let c = compare_states(a, b);
                    if c != Ordering::Equal {
                        return c;
                    }
                }
                Ordering::Equal
            })
    }
}

/// Lexicographic total order on state vectors.
pub fn compare_states(a: &DVector<f64>, b: &DVector<f64>) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (x, y) in a.iter().zip(b.iter()) {
            let c = x.total_cmp(y);
            if c != Ordering::Equal {
                return c;
            }
        }
        Ordering::Equal
    })
}

/// A finite set of distinct trajectories. Element order carries no meaning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    elements: Vec<Trajectory>,
}

/// Partition of a set on `[k, k+1]` into survivors, deaths and births.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntervalSplit {
    /// Present at both `k` and `k + 1`.
    pub survivors: TrajectorySet,
    /// Present at `k` only.
    pub deaths: TrajectorySet,
    /// Born at `k + 1`.
    pub births: TrajectorySet,
}

impl TrajectorySet {
    pub fn new(elements: Vec<Trajectory>) -> Result<Self> {
        let mut set = Self::default();
        for t in elements {
            set.insert(t)?;
        }
        Ok(set)
    }

    pub(crate) fn from_vec_unchecked(elements: Vec<Trajectory>) -> Self {
        Self { elements }
    }

    /// Adds a trajectory; identical elements are rejected.
    pub fn insert(&mut self, t: Trajectory) -> Result<()> {
        if self.elements.iter().any(|e| e == &t) {
            return Err(domain("duplicate trajectory in set"));
        }
        self.elements.push(t);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.elements.iter()
    }

    pub fn as_slice(&self) -> &[Trajectory] {
        &self.elements
    }

    pub fn into_vec(self) -> Vec<Trajectory> {
        self.elements
    }

    /// Elements in canonical order.
    pub fn sorted(&self) -> Vec<&Trajectory> {
        let mut v: Vec<&Trajectory> = self.elements.iter().collect();
        v.sort_by(|a, b| a.canonical_cmp(b));
        v
    }

    /// Set equality irrespective of element order.
    pub fn set_eq(&self, other: &Self) -> bool {
        self.len() == other.len() && self.elements.iter().all(|e| other.elements.contains(e))
    }

    /// States of all trajectories present at time `k`.
    pub fn states_at(&self, k: usize) -> Vec<DVector<f64>> {
        self.elements.iter().filter_map(|t| t.state_at(k).cloned()).collect()
    }

    /// Latest end time over the set, or 0 when empty.
    pub fn max_end_time(&self) -> usize {
        self.elements.iter().map(Trajectory::end_time).max().unwrap_or(0)
    }

    /// Splits a set living on `[k, k+1]` into survivors, deaths and births.
    pub fn split_interval(&self, k: usize) -> Result<IntervalSplit> {
        let mut out = IntervalSplit::default();
        for t in &self.elements {
            let bucket = match (t.birth_time, t.len()) {
                (b, 2) if b == k => &mut out.survivors,
                (b, 1) if b == k => &mut out.deaths,
                (b, 1) if b == k + 1 => &mut out.births,
                _ => {
                    return Err(domain(format!(
                        "trajectory on [{}, {}] is not within [{k}, {}]",
                        t.birth_time,
                        t.end_time(),
                        k + 1
                    )))
                }
            };
            bucket.elements.push(t.clone());
        }
        Ok(out)
    }
}

impl IntoIterator for TrajectorySet {
    type Item = Trajectory;
    type IntoIter = std::vec::IntoIter<Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.into_iter()
    }
}

impl<'a> IntoIterator for &'a TrajectorySet {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.elements.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn traj(t: usize, xs: &[f64]) -> Trajectory {
        Trajectory::new(t, xs.iter().map(|x| dvector![*x]).collect()).unwrap()
    }

    #[test]
    fn states_at_basic_cases() {
        assert!(TrajectorySet::default().states_at(5).is_empty());
        let set = TrajectorySet::new(vec![traj(1, &[1.0, 2.0])]).unwrap();
        assert!(set.states_at(3).is_empty());
        assert_eq!(set.states_at(2), vec![dvector![2.0]]);
    }

    #[test]
    fn example1_states_at_second_step() {
        let set = TrajectorySet::new(vec![
            Trajectory::new(1, vec![dvector![2.0, -1.0], dvector![1.0, 0.0]]).unwrap(),
            Trajectory::new(1, vec![dvector![1.0, 1.0], dvector![2.0, 0.0]]).unwrap(),
        ])
        .unwrap();
        let mut got = set.states_at(2);
        got.sort_by(compare_states);
        assert_eq!(got, vec![dvector![1.0, 0.0], dvector![2.0, 0.0]]);
    }

    #[test]
    fn split_examples() {
        let k = 4;
        let s = TrajectorySet::new(vec![traj(k + 1, &[0.0])]).unwrap().split_interval(k).unwrap();
        assert!(s.survivors.is_empty() && s.deaths.is_empty() && s.births.len() == 1);

        let s = TrajectorySet::new(vec![traj(k, &[0.0, 1.0])]).unwrap().split_interval(k).unwrap();
        assert!(s.survivors.len() == 1 && s.deaths.is_empty() && s.births.is_empty());

        let s = TrajectorySet::new(vec![traj(k, &[0.0]), traj(k + 1, &[1.0])])
            .unwrap()
            .split_interval(k)
            .unwrap();
        assert!(s.survivors.is_empty());
        assert_eq!(s.deaths.as_slice(), &[traj(k, &[0.0])]);
        assert_eq!(s.births.as_slice(), &[traj(k + 1, &[1.0])]);
    }

    #[test]
    fn split_rejects_out_of_interval() {
        let set = TrajectorySet::new(vec![traj(1, &[0.0, 1.0, 2.0])]).unwrap();
        assert!(matches!(set.split_interval(1), Err(crate::Error::Domain(_))));
        let set = TrajectorySet::new(vec![traj(3, &[0.0])]).unwrap();
        assert!(set.split_interval(1).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        assert!(TrajectorySet::new(vec![traj(1, &[0.0]), traj(1, &[0.0])]).is_err());
        assert!(Trajectory::new(0, vec![dvector![1.0]]).is_err());
        assert!(Trajectory::new(1, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn split_is_partition(kinds in prop::collection::vec((0u8..3, -5.0f64..5.0), 0..8)) {
            let k = 3;
            let elems: Vec<Trajectory> = kinds
                .iter()
                .enumerate()
                .map(|(i, (kind, x))| {
                    let x = x + i as f64 * 100.0;
                    match kind {
                        0 => traj(k, &[x, x + 1.0]),
                        1 => traj(k, &[x]),
                        _ => traj(k + 1, &[x]),
                    }
                })
                .collect();
            let set = TrajectorySet::new(elems).unwrap();
            let s = set.split_interval(k).unwrap();
            let mut all: Vec<Trajectory> = s.survivors.into_vec();
            all.extend(s.deaths.into_vec());
            all.extend(s.births.into_vec());
            prop_assert!(TrajectorySet::from_vec_unchecked(all).set_eq(&set));
        }
    }
}
