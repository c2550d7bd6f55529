//! Backward simulation of sets of trajectories from multi-Bernoulli filtering densities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::assignment::{murty_kbest, Assignment, CostMatrix};
use crate::error::{domain, numerical, Error, Result};
use crate::gaussian::{gate_threshold, repair_psd, sqrt_factor, symmetrize};
use crate::logmath::{ln_or_neg_inf, log_add, log_sum_exp};
use crate::multitarget::{GaussianMixture, MotionModel, MultiBernoulli};
use crate::rng;
use crate::trajectory::{Trajectory, TrajectorySet};

/// Floor applied to the log birth intensity before it divides a linking weight.
pub const LN_BIRTH_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Which intensity weighs trajectories that start at `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SmootherBirth {
    /// The motion model's birth intensity.
    #[default]
    Model,
    /// The filter's predicted undetected intensity, supplied per step.
    Undetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub particles: usize,
    pub murty_m: usize,
    pub gate_probability: f64,
    pub birth: SmootherBirth,
    pub max_retries: usize,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { particles: 300, murty_m: 30, gate_probability: 0.999, birth: SmootherBirth::Model, max_retries: 10 }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("smoother.particles must be at least 1".into()));
        }
        if self.murty_m == 0 {
            return Err(Error::Config("smoother.murty_m must be at least 1".into()));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability < 1.0) {
            return Err(Error::Config("smoother.gate_probability must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Birth intensity used at each backward step.
#[derive(Debug, Clone, Copy)]
pub enum BirthSchedule<'a> {
    Model,
    /// Entry `k - 1` weighs trajectories starting at `k + 1`, for `k = 1..K-1`.
    PerStep(&'a [GaussianMixture]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypothesisKind {
    /// Component `component` at `k` continues as survivor `survivor` at `k + 1`.
    Survive { component: usize, survivor: usize },
    /// Component `component` exists at `k` and ends there.
    Die { component: usize },
    /// Survivor `survivor` starts at `k + 1`.
    Newborn { survivor: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTrajectoryHypothesis {
    pub kind: HypothesisKind,
    pub log_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalHypothesis {
    pub hypotheses: Vec<SingleTrajectoryHypothesis>,
    /// Sum of member log weights plus `ln(1 - r)` of every unused component.
    pub log_weight: f64,
}

/// A hypothesis drawn from the truncated mixture, with its normalized log probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledHypothesis {
    pub hypothesis: GlobalHypothesis,
    pub log_probability: f64,
}

/// One sampled set of trajectories on `[start, K]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub start: usize,
    pub trajectories: TrajectorySet,
    /// Element `i` is the mean of element `i` of `trajectories` given the sampled
    /// associations: the same backward recursion with every draw replaced by its mean.
    pub means: TrajectorySet,
    pub log_weight: f64,
}

impl Particle {
    /// A particle whose states are taken as known, so they are their own means.
    pub fn new(start: usize, trajectories: TrajectorySet, log_weight: f64) -> Self {
        Self { start, means: trajectories.clone(), trajectories, log_weight }
    }
}

/// Particles of one backward simulation plus bookkeeping about failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherOutput {
    pub particles: Vec<Particle>,
    /// Particles restarted from scratch after an infeasible step.
    pub restarts: usize,
    /// Particles abandoned after exhausting their retries.
    pub failed: usize,
}

/// Gaussian log density with a cached factorization.
#[derive(Debug, Clone)]
struct PreparedGaussian {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl PreparedGaussian {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(cov).ok_or_else(|| numerical("covariance is not positive definite"))?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (mean.len() as f64 * std::f64::consts::TAU.ln() + log_det);
        Ok(Self { mean, chol, log_norm })
    }

    fn distance_sq(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.mean;
        self.chol.l_dirty().solve_lower_triangular(&d).expect("triangular factor is nonsingular").norm_squared()
    }
}

fn prepare_mixture(mix: &GaussianMixture) -> Result<Vec<(f64, PreparedGaussian)>> {
    mix.iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, g)| Ok((w.ln(), PreparedGaussian::new(g.mean.clone(), g.cov.clone())?)))
        .collect()
}

fn ln_birth(prepared: &[(f64, PreparedGaussian)], x: &DVector<f64>) -> f64 {
    let mut acc = f64::NEG_INFINITY;
    for (ln_w, g) in prepared {
        acc = log_add(acc, ln_w + g.log_norm - 0.5 * g.distance_sq(x));
    }
    acc.max(LN_BIRTH_FLOOR)
}

/// Per-component quantities shared by every particle at one step.
#[derive(Debug, Clone)]
struct ComponentCache {
    ln_link: f64,
    ln_die: f64,
    ln_absent: f64,
    predicted: PreparedGaussian,
    prior_mean: DVector<f64>,
    prior_sqrt: DMatrix<f64>,
    /// `P F^T (F P F^T + Q)^-1`.
    gain: DMatrix<f64>,
    cond_sqrt: DMatrix<f64>,
}

/// Everything needed to extend particles from `[k+1, K]` to `[k, K]`.
#[derive(Debug, Clone)]
pub struct BackwardStep {
    k: usize,
    components: Vec<ComponentCache>,
    birth: Vec<(f64, PreparedGaussian)>,
    gate: f64,
}

impl BackwardStep {
    pub fn new(mb_k: &MultiBernoulli, k: usize, model: &MotionModel, birth: &GaussianMixture, gate: f64) -> Result<Self> {
        if !(gate > 0.0) {
            return Err(domain("gate threshold must be positive"));
        }
        let f = &model.transition;
        let ps = model.survival_probability;
        let mut components = Vec::with_capacity(mb_k.len());
        for b in &mb_k.components {
            if b.density.dim() != model.state_dim() {
                return Err(domain("filter component dimension does not match the model"));
            }
            let r = b.existence;
            let (m, p) = (&b.density.mean, &b.density.cov);
            let fp = f * p;
            let mut s = &fp * f.transpose() + &model.process_noise;
            symmetrize(&mut s);
            let predicted = PreparedGaussian::new(f * m, s)?;
            let gain = predicted.chol.solve(&fp).transpose();
            let cond = repair_psd(p - &gain * &fp)?;
            components.push(ComponentCache {
                ln_link: ln_or_neg_inf(r) + ln_or_neg_inf(ps),
                ln_die: ln_or_neg_inf(r) + ln_or_neg_inf(1.0 - ps),
                ln_absent: ln_or_neg_inf(1.0 - r),
                predicted,
                prior_mean: m.clone(),
                prior_sqrt: sqrt_factor(p),
                gain,
                cond_sqrt: sqrt_factor(&cond),
            });
        }
        Ok(Self { k, components, birth: prepare_mixture(birth)?, gate })
    }

    /// Linking log weights `ln(r p_S N(x_j; F m, S) / lambda_b(x_j))`, gated, for every
    /// component and survivor, plus the survivors' floored log birth intensities.
    fn link_weights(&self, survivors: &[&DVector<f64>], gate: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let ln_b: Vec<f64> = survivors.iter().map(|x| ln_birth(&self.birth, x)).collect();
        let links = self
            .components
            .iter()
            .map(|c| {
                survivors
                    .iter()
                    .zip(&ln_b)
                    .map(|(x, lb)| {
                        if c.ln_link == f64::NEG_INFINITY {
                            return f64::NEG_INFINITY;
                        }
                        let d2 = c.predicted.distance_sq(x);
                        if d2 > gate {
                            f64::NEG_INFINITY
                        } else {
                            c.ln_link + c.predicted.log_norm - 0.5 * d2 - lb
                        }
                    })
                    .collect()
            })
            .collect();
        (links, ln_b)
    }

    /// Cost matrix `-[C1 C2 C3]` of size `n x (n' + 2n)`.
    pub fn cost_matrix(&self, survivors: &[&DVector<f64>], gate: f64) -> Result<CostMatrix> {
        let (links, _) = self.link_weights(survivors, gate);
        let (n, ns) = (self.components.len(), survivors.len());
        let mut c = CostMatrix::forbidden(n, ns + 2 * n);
        for (i, comp) in self.components.iter().enumerate() {
            for (j, l) in links[i].iter().enumerate() {
                if l.is_finite() {
                    c.set(i, j, -l)?;
                }
            }
            if comp.ln_die.is_finite() {
                c.set(i, ns + i, -comp.ln_die)?;
            }
            if comp.ln_absent.is_finite() {
                c.set(i, ns + n + i, -comp.ln_absent)?;
            }
        }
        Ok(c)
    }

    fn sample_state<R: Rng + ?Sized>(&self, kind: HypothesisKind, survivors: &[&DVector<f64>], rng: &mut R) -> Option<DVector<f64>> {
        let (mean, sqrt) = match kind {
            HypothesisKind::Survive { component, survivor } => {
                let c = &self.components[component];
                let innovation = survivors[survivor] - &c.predicted.mean;
                (&c.prior_mean + &c.gain * innovation, &c.cond_sqrt)
            }
            HypothesisKind::Die { component } => {
                let c = &self.components[component];
                (c.prior_mean.clone(), &c.prior_sqrt)
            }
            HypothesisKind::Newborn { .. } => return None,
        };
        let n = mean.len();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        Some(mean + sqrt * z)
    }

    /// Samples the hypothesis for one particle. Components with no gated link choose
    /// between dying and not existing independently of the rest, so only linkable
    /// components enter the ranked assignment.
    fn sample_factored<R: Rng + ?Sized>(
        &self,
        survivors: &[&DVector<f64>],
        gate: f64,
        m: usize,
        rng: &mut R,
    ) -> Option<(Vec<HypothesisKind>, f64)> {
        let (links, _) = self.link_weights(survivors, gate);
        let ns = survivors.len();
        let mut kinds = Vec::new();
        let mut log_prob = 0.0;
        let mut linked = Vec::new();
        for (i, comp) in self.components.iter().enumerate() {
            if links[i].iter().any(|l| l.is_finite()) {
                linked.push(i);
                continue;
            }
            let total = log_add(comp.ln_die, comp.ln_absent);
            if total == f64::NEG_INFINITY {
                return None;
            }
            let p_die = (comp.ln_die - total).exp();
            if rng.random::<f64>() < p_die {
                kinds.push(HypothesisKind::Die { component: i });
                log_prob += comp.ln_die - total;
            } else {
                log_prob += comp.ln_absent - total;
            }
        }
        let nl = linked.len();
        let mut c = CostMatrix::forbidden(nl, ns + 2 * nl);
        for (a, &i) in linked.iter().enumerate() {
            let comp = &self.components[i];
            for (j, l) in links[i].iter().enumerate() {
                if l.is_finite() {
                    c.set(a, j, -l).expect("finite entry");
                }
            }
            if comp.ln_die.is_finite() {
                c.set(a, ns + a, -comp.ln_die).expect("finite entry");
            }
            if comp.ln_absent.is_finite() {
                c.set(a, ns + nl + a, -comp.ln_absent).expect("finite entry");
            }
        }
        let hyps = murty_kbest(&c, m);
        let (pick, lp) = sample_log_categorical(&hyps.iter().map(|h| -h.cost).collect::<Vec<_>>(), rng)?;
        log_prob += lp;
        let mut used = vec![false; ns];
        for (a, &col) in hyps[pick].row_to_col.iter().enumerate() {
            let i = linked[a];
            if col < ns {
                used[col] = true;
                kinds.push(HypothesisKind::Survive { component: i, survivor: col });
            } else if col < ns + nl {
                kinds.push(HypothesisKind::Die { component: i });
            }
        }
        kinds.extend((0..ns).filter(|&j| !used[j]).map(|survivor| HypothesisKind::Newborn { survivor }));
        Some((kinds, log_prob))
    }

    fn try_extend<R: Rng + ?Sized>(&self, particle: &Particle, m: usize, gate: f64, rng: &mut R) -> Option<Particle> {
        let k = self.k;
        let all = particle.trajectories.as_slice();
        let means = particle.means.as_slice();
        let (survivors, rest): (Vec<usize>, Vec<usize>) = (0..all.len()).partition(|&i| all[i].birth_time == k + 1);
        let firsts: Vec<&DVector<f64>> = survivors.iter().map(|&i| &all[i].states[0]).collect();
        let (kinds, log_prob) = self.sample_factored(&firsts, gate, m, rng)?;
        let mut out: Vec<Trajectory> = rest.iter().map(|&i| all[i].clone()).collect();
        let mut out_means: Vec<Trajectory> = rest.iter().map(|&i| means[i].clone()).collect();
        let prepend = |x: DVector<f64>, t: &Trajectory| {
            let mut states = Vec::with_capacity(t.states.len() + 1);
            states.push(x);
            states.extend(t.states.iter().cloned());
            Trajectory { birth_time: k, states }
        };
        for kind in kinds {
            let x = self.sample_state(kind, &firsts, rng);
            match (kind, x) {
                (HypothesisKind::Survive { component, survivor }, Some(x)) => {
                    let i = survivors[survivor];
                    let c = &self.components[component];
                    let mean = &c.prior_mean + &c.gain * (&means[i].states[0] - &c.predicted.mean);
                    out.push(prepend(x, &all[i]));
                    out_means.push(prepend(mean, &means[i]));
                }
                (HypothesisKind::Die { component }, Some(x)) => {
                    out.push(Trajectory { birth_time: k, states: vec![x] });
                    out_means.push(Trajectory { birth_time: k, states: vec![self.components[component].prior_mean.clone()] });
                }
                (HypothesisKind::Newborn { survivor }, _) => {
                    out.push(all[survivors[survivor]].clone());
                    out_means.push(means[survivors[survivor]].clone());
                }
                _ => unreachable!("only newborns are deterministic"),
            }
        }
        Some(Particle {
            start: k,
            trajectories: TrajectorySet::from_vec_unchecked(out),
            means: TrajectorySet::from_vec_unchecked(out_means),
            log_weight: particle.log_weight + log_prob,
        })
    }

    /// Extends `particle` to `[k, K]`, retrying once without gating if the gated
    /// problem has no feasible hypothesis.
    pub fn extend<R: Rng + ?Sized>(&self, particle: &Particle, m: usize, rng: &mut R) -> Result<Particle> {
        if particle.start != self.k + 1 {
            return Err(domain(format!("particle starts at {} but the step expects {}", particle.start, self.k + 1)));
        }
        if let Some(p) = self.try_extend(particle, m, self.gate, rng) {
            return Ok(p);
        }
        if self.gate.is_finite() {
            if let Some(p) = self.try_extend(particle, m, f64::INFINITY, rng) {
                return Ok(p);
            }
        }
        Err(Error::Smoothing { step: self.k, reason: "no feasible association hypothesis".into() })
    }
}

/// Samples an index with probability proportional to `exp(log_w)`; returns it with
/// its normalized log probability. `None` if every weight is zero.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> Option<(usize, f64)> {
    let norm = log_sum_exp(log_w);
    if norm == f64::NEG_INFINITY {
        return None;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, l) in log_w.iter().enumerate() {
        let p = (l - norm).exp();
        if p > 0.0 {
            last = i;
            acc += p;
            if u < acc {
                return Some((i, l - norm));
            }
        }
    }
    Some((last, log_w[last] - norm))
}

/// Cost matrix `-[C1 C2 C3]` for the backward kernel at `k`.
pub fn build_cost_matrix(
    mb_k: &MultiBernoulli,
    survivors: &[DVector<f64>],
    model: &MotionModel,
    birth: &GaussianMixture,
    gate: f64,
) -> Result<CostMatrix> {
    let step = BackwardStep::new(mb_k, 0, model, birth, gate)?;
    let refs: Vec<&DVector<f64>> = survivors.iter().collect();
    step.cost_matrix(&refs, gate)
}

/// Reads an assignment of `-[C1 C2 C3]` as a global hypothesis. `ln_birth[j]` is the
/// floored log birth intensity at survivor `j`.
pub fn hypothesis_from_assignment(c: &CostMatrix, a: &Assignment, ln_birth: &[f64]) -> GlobalHypothesis {
    let n = c.rows();
    let ns = ln_birth.len();
    let mut used = vec![false; ns];
    let mut hypotheses = Vec::new();
    let mut log_weight = 0.0;
    for (i, &col) in a.row_to_col.iter().enumerate() {
        let entry = -c.get(i, col);
        if col < ns {
            used[col] = true;
            let w = entry + ln_birth[col];
            hypotheses.push(SingleTrajectoryHypothesis { kind: HypothesisKind::Survive { component: i, survivor: col }, log_weight: w });
            log_weight += w;
        } else if col < ns + n {
            hypotheses.push(SingleTrajectoryHypothesis { kind: HypothesisKind::Die { component: i }, log_weight: entry });
            log_weight += entry;
        } else {
            log_weight += entry;
        }
    }
    for j in (0..ns).filter(|&j| !used[j]) {
        hypotheses.push(SingleTrajectoryHypothesis { kind: HypothesisKind::Newborn { survivor: j }, log_weight: ln_birth[j] });
        log_weight += ln_birth[j];
    }
    GlobalHypothesis { hypotheses, log_weight }
}

/// Floored log birth intensity at each survivor state.
pub fn survivor_log_birth(birth: &GaussianMixture, survivors: &[DVector<f64>]) -> Result<Vec<f64>> {
    let prepared = prepare_mixture(birth)?;
    Ok(survivors.iter().map(|x| ln_birth(&prepared, x)).collect())
}

/// Keeps the `m` best hypotheses of `c` and samples one in proportion to its weight.
pub fn truncate_and_sample_hypothesis<R: Rng + ?Sized>(
    c: &CostMatrix,
    ln_birth: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<SampledHypothesis> {
    if m == 0 {
        return Err(domain("at least one hypothesis must be kept"));
    }
    let hyps = murty_kbest(c, m);
    let neg: Vec<f64> = hyps.iter().map(|h| -h.cost).collect();
    let (pick, log_probability) = sample_log_categorical(&neg, rng).ok_or(Error::Infeasible)?;
    Ok(SampledHypothesis { hypothesis: hypothesis_from_assignment(c, &hyps[pick], ln_birth), log_probability })
}

/// Extends `particle` from `[k+1, K]` to `[k, K]` using the filtering density at `k`.
#[allow(clippy::too_many_arguments)]
pub fn extend_backward<R: Rng + ?Sized>(
    particle: &Particle,
    mb_k: &MultiBernoulli,
    k: usize,
    model: &MotionModel,
    birth: &GaussianMixture,
    m: usize,
    gate: f64,
    rng: &mut R,
) -> Result<Particle> {
    BackwardStep::new(mb_k, k, model, birth, gate)?.extend(particle, m, rng)
}

/// Draws the terminal set of a particle from the final filtering density.
pub fn sample_terminal<R: Rng + ?Sized>(mb: &MultiBernoulli, k: usize, rng: &mut R) -> Particle {
    let mut out = Vec::new();
    let mut means = Vec::new();
    for b in &mb.components {
        if rng.random::<f64>() < b.existence {
            let n = b.density.dim();
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = &b.density.mean + sqrt_factor(&b.density.cov) * z;
            out.push(Trajectory { birth_time: k, states: vec![x] });
            means.push(Trajectory { birth_time: k, states: vec![b.density.mean.clone()] });
        }
    }
    Particle {
        start: k,
        trajectories: TrajectorySet::from_vec_unchecked(out),
        means: TrajectorySet::from_vec_unchecked(means),
        log_weight: 0.0,
    }
}

fn simulate_particle(
    filters: &[MultiBernoulli],
    steps: &[BackwardStep],
    m: usize,
    max_retries: usize,
    rng: &mut impl Rng,
) -> (Option<Particle>, usize) {
    let horizon = filters.len();
    for attempt in 0..=max_retries {
        let mut particle = sample_terminal(&filters[horizon - 1], horizon, rng);
        let mut ok = true;
        for step in steps.iter().rev() {
            match step.extend(&particle, m, rng) {
                Ok(p) => particle = p,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return (Some(particle), attempt);
        }
    }
    (None, max_retries + 1)
}

/// Runs backward simulation over the filtering densities `filters[k-1]`, `k = 1..K`,
/// producing up to `cfg.particles` particles. Particle `i` uses its own random stream
/// derived from `(seed, i)`, so the output does not depend on scheduling.
pub fn backward_simulate(
    filters: &[MultiBernoulli],
    model: &MotionModel,
    births: BirthSchedule<'_>,
    cfg: &SmootherConfig,
    seed: u64,
) -> Result<SmootherOutput> {
    if filters.is_empty() {
        return Err(domain("at least one filtering density is required"));
    }
    if cfg.particles == 0 || cfg.murty_m == 0 {
        return Err(domain("particles and murty_m must be positive"));
    }
    let horizon = filters.len();
    if let BirthSchedule::PerStep(b) = births {
        if b.len() + 1 < horizon {
            return Err(domain(format!("{} birth intensities supplied for {} backward steps", b.len(), horizon - 1)));
        }
    }
    let gate = gate_threshold(cfg.gate_probability, model.state_dim())?;
    let steps: Vec<BackwardStep> = (1..horizon)
        .map(|k| {
            let birth = match births {
                BirthSchedule::Model => &model.birth,
                BirthSchedule::PerStep(b) => &b[k - 1],
            };
            BackwardStep::new(&filters[k - 1], k, model, birth, gate)
        })
        .collect::<Result<_>>()?;

    let run = |i: usize| {
        let mut r = rng::stream(seed, i as u64, 0);
        simulate_particle(filters, &steps, cfg.murty_m, cfg.max_retries, &mut r)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<(Option<Particle>, usize)> = {
        use rayon::prelude::*;
        (0..cfg.particles).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<(Option<Particle>, usize)> = (0..cfg.particles).map(run).collect();

    let mut out = SmootherOutput { particles: Vec::with_capacity(cfg.particles), restarts: 0, failed: 0 };
    for (p, restarts) in results {
        out.restarts += restarts;
        match p {
            Some(p) => out.particles.push(p),
            None => out.failed += 1,
        }
    }
    if out.particles.is_empty() {
        return Err(Error::Smoothing { step: 0, reason: "every particle failed".into() });
    }
    Ok(out)
}

/// The particle with the largest accumulated log weight; ties go to the first.
pub fn smoother_estimate(particles: &[Particle]) -> Option<&Particle> {
    let mut best: Option<&Particle> = None;
    for p in particles {
        if best.is_none_or(|b| p.log_weight > b.log_weight) {
            best = Some(p);
        }
    }
    best
}
