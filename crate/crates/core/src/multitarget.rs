//! Single-target densities, multi-Bernoulli processes and the motion model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::gaussian;
use crate::logmath::{ln_or_neg_inf, log_add};
use crate::trajectory::{compare_states, TrajectorySet};

/// Relative symmetry tolerance for covariance matrices.
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianDensity {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianDensity {
    /// Validates that the covariance is square, symmetric and PSD.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(domain(format!(
                "covariance is {}x{} but mean has length {n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(domain("covariance is not symmetric"));
                }
            }
        }
        let trace = cov.trace();
        if n > 0 {
            let min_eig = cov.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-12 * trace.abs().max(f64::MIN_POSITIVE) {
                return Err(domain(format!("covariance has eigenvalue {min_eig:e}")));
            }
        }
        Ok(Self { mean, cov })
    }

    /// Constructs without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn point_mass(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self { mean, cov: DMatrix::zeros(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub components: Vec<GaussianDensity>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianDensity>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(domain("mixture weights and components differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(domain("mixture weights must be finite and nonnegative"));
        }
        if let Some(first) = components.first() {
            if components.iter().any(|c| c.dim() != first.dim()) {
                return Err(domain("mixture components differ in dimension"));
            }
        }
        Ok(Self { weights, components })
    }

    pub fn empty() -> Self {
        Self { weights: Vec::new(), components: Vec::new() }
    }

    pub fn single(weight: f64, density: GaussianDensity) -> Result<Self> {
        Self::new(vec![weight], vec![density])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integral of the intensity.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Log of the intensity at `x`; `-inf` for an empty mixture.
    pub fn log_intensity(&self, x: &DVector<f64>) -> Result<f64> {
        let mut acc = f64::NEG_INFINITY;
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w > 0.0 {
                acc = log_add(acc, w.ln() + gaussian::logpdf(&c.mean, &c.cov, x)?);
            }
        }
        Ok(acc)
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GaussianDensity)> {
        self.weights.iter().copied().zip(self.components.iter())
    }
}

/// One Bernoulli component: existence probability and existence-conditioned density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bernoulli {
    pub existence: f64,
    pub density: GaussianDensity,
}

impl Bernoulli {
    pub fn new(existence: f64, density: GaussianDensity) -> Result<Self> {
        if !(0.0..=1.0).contains(&existence) {
            return Err(domain(format!("existence probability {existence} outside [0, 1]")));
        }
        Ok(Self { existence, density })
    }
}

/// Multi-Bernoulli process: a union of independent Bernoulli components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiBernoulli {
    pub components: Vec<Bernoulli>,
}

impl MultiBernoulli {
    pub fn new(components: Vec<Bernoulli>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn existence(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.existence).collect()
    }

    /// Cardinality distribution (Poisson-binomial of the existence probabilities).
    pub fn cardinality_pmf(&self) -> Vec<f64> {
        poisson_binomial(&self.existence())
    }

    /// Log of the multi-Bernoulli set density at `states`.
    ///
    /// Sums, over every injective association of states to components, the
    /// product of `r p(x)` for associated components and `1 - r` for the rest.
    /// States are sorted first so the result does not depend on input order.
    pub fn log_density(&self, states: &[DVector<f64>]) -> Result<f64> {
        let m = states.len();
        if m > self.len() {
            return Ok(f64::NEG_INFINITY);
        }
        if m > 20 {
            return Err(domain("set density evaluation supports at most 20 states"));
        }
        for (i, x) in states.iter().enumerate() {
            if let Some(c) = self.components.first() {
                if x.len() != c.density.dim() {
                    return Err(domain(format!(
                        "state {i} has dimension {} but components have {}",
                        x.len(),
                        c.density.dim()
                    )));
                }
            }
        }
        let mut sorted: Vec<&DVector<f64>> = states.iter().collect();
        sorted.sort_by(|a, b| compare_states(a, b));

        // dp[mask]: log weight of assigning exactly the states in `mask` to the
        // components processed so far.
        let full = (1usize << m) - 1;
        let mut dp = vec![f64::NEG_INFINITY; full + 1];
        dp[0] = 0.0;
        let mut log_like = vec![0.0; m];
        for comp in &self.components {
            let ln_r = ln_or_neg_inf(comp.existence);
            let ln_miss = ln_or_neg_inf(1.0 - comp.existence);
            if ln_r > f64::NEG_INFINITY {
                for (s, x) in sorted.iter().enumerate() {
                    log_like[s] = ln_r + gaussian::logpdf(&comp.density.mean, &comp.density.cov, x)?;
                }
            }
            let mut next = vec![f64::NEG_INFINITY; full + 1];
            for mask in 0..=full {
                let mut acc = dp[mask] + ln_miss;
                if ln_r > f64::NEG_INFINITY {
                    let mut bits = mask;
                    while bits != 0 {
                        let s = bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        acc = log_add(acc, dp[mask & !(1 << s)] + log_like[s]);
                    }
                }
                next[mask] = acc;
            }
            dp = next;
        }
        Ok(dp[full])
    }
}

/// Probability mass function of a sum of independent Bernoulli variables.
pub fn poisson_binomial(probs: &[f64]) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &p in probs {
        let mut next = vec![0.0; pmf.len() + 1];
        for (n, &q) in pmf.iter().enumerate() {
            next[n] += q * (1.0 - p);
            next[n + 1] += q * p;
        }
        pmf = next;
    }
    pmf
}

/// Linear-Gaussian dynamics with constant survival and Poisson birth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    pub transition: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
    pub survival_probability: f64,
    pub birth: GaussianMixture,
}

impl MotionModel {
    pub fn new(
        transition: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        survival_probability: f64,
        birth: GaussianMixture,
    ) -> Result<Self> {
        let n = transition.nrows();
        if transition.ncols() != n {
            return Err(domain("transition matrix must be square"));
        }
        // Reuse the covariance checks on the process noise.
        GaussianDensity::new(DVector::zeros(n), process_noise.clone())?;
        if !(0.0..=1.0).contains(&survival_probability) {
            return Err(domain("survival probability outside [0, 1]"));
        }
        if birth.components.iter().any(|c| c.dim() != n) {
            return Err(domain("birth components do not match the state dimension"));
        }
        Ok(Self { transition, process_noise, survival_probability, birth })
    }

    /// Nearly-constant-velocity model with state `[position; velocity]`.
    ///
    /// `noise_std` is applied independently to every state dimension.
    pub fn constant_velocity(
        position_dims: usize,
        dt: f64,
        noise_std: f64,
        survival_probability: f64,
        birth: GaussianMixture,
    ) -> Result<Self> {
        let n = 2 * position_dims;
        let mut f = DMatrix::identity(n, n);
        for d in 0..position_dims {
            f[(d, position_dims + d)] = dt;
        }
        let q = DMatrix::identity(n, n) * (noise_std * noise_std);
        Self::new(f, q, survival_probability, birth)
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }
}

/// Log of the one-step predicted multitrajectory density on `[k, k+1]`.
///
/// Evaluates `f(x_k) exp(-int lambda_b) prod_B lambda_b prod_V (1 - p_S) prod_Y g p_S`
/// where `x_k` are the time-`k` states of the surviving and dying trajectories.
pub fn eval_predicted_trajectory_log_density(
    filter: &MultiBernoulli,
    set: &TrajectorySet,
    k: usize,
    model: &MotionModel,
) -> Result<f64> {
    let split = set.split_interval(k)?;
    let ps = model.survival_probability;
    let mut present = split.survivors.states_at(k);
    present.extend(split.deaths.states_at(k));
    let mut total = filter.log_density(&present)?;
    total -= model.birth.total_mass();
    for b in split.births.iter() {
        total += model.birth.log_intensity(&b.states[0])?;
    }
    if !split.deaths.is_empty() {
        total += split.deaths.len() as f64 * ln_or_neg_inf(1.0 - ps);
    }
    for y in split.survivors.iter() {
        let mean = &model.transition * &y.states[0];
        total += ln_or_neg_inf(ps) + gaussian::logpdf(&mean, &model.process_noise, &y.states[1])?;
    }
    Ok(total)
}
