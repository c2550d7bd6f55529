//! Linear-Gaussian multi-Bernoulli filter with Murty data association.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::assignment::{murty_kbest, CostMatrix};
use crate::error::{domain, numerical, Error, Result};
use crate::gaussian::{self, gate_threshold, moment_match, predict_moments, symmetrize};
use crate::logmath::{ln_or_neg_inf, log_sum_exp};
use crate::multitarget::{
    poisson_binomial, Bernoulli, GaussianDensity, GaussianMixture, MotionModel, MultiBernoulli,
};

/// Smallest intensity or probability allowed inside a logarithm.
const LOG_FLOOR: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Undetected-intensity components lighter than this are dropped.
const UNDETECTED_PRUNE: f64 = 1e-3;

/// Linear-Gaussian sensor with Poisson clutter uniform over the surveillance region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub measurement_matrix: DMatrix<f64>,
    pub measurement_noise: DMatrix<f64>,
    pub detection_probability: f64,
    pub clutter_rate: f64,
    pub surveillance_volume: f64,
}

impl SensorModel {
    pub fn new(
        measurement_matrix: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
        detection_probability: f64,
        clutter_rate: f64,
        surveillance_volume: f64,
    ) -> Result<Self> {
        let m = measurement_matrix.nrows();
        if measurement_noise.shape() != (m, m) {
            return Err(domain("measurement noise must be square with one row per measurement dimension"));
        }
        GaussianDensity::new(DVector::zeros(m), measurement_noise.clone())?;
        if !(0.0..=1.0).contains(&detection_probability) {
            return Err(domain("detection probability must lie in [0, 1]"));
        }
        if !(clutter_rate >= 0.0 && clutter_rate.is_finite()) {
            return Err(domain("clutter rate must be finite and nonnegative"));
        }
        if !(surveillance_volume > 0.0 && surveillance_volume.is_finite()) {
            return Err(domain("surveillance volume must be positive"));
        }
        Ok(Self { measurement_matrix, measurement_noise, detection_probability, clutter_rate, surveillance_volume })
    }

    /// Observes the first `position_dims` state components with isotropic noise.
    pub fn position(
        position_dims: usize,
        state_dim: usize,
        noise_std: f64,
        detection_probability: f64,
        clutter_rate: f64,
        surveillance_volume: f64,
    ) -> Result<Self> {
        if position_dims > state_dim {
            return Err(domain("more position dimensions than state dimensions"));
        }
        let h = DMatrix::from_fn(position_dims, state_dim, |r, c| if r == c { 1.0 } else { 0.0 });
        let r = DMatrix::identity(position_dims, position_dims) * (noise_std * noise_std);
        Self::new(h, r, detection_probability, clutter_rate, surveillance_volume)
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_matrix.nrows()
    }

    pub fn clutter_density(&self) -> f64 {
        self.clutter_rate / self.surveillance_volume
    }
}

/// How the birth intensity enters the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BirthMode {
    /// Each birth component becomes a Bernoulli with `r = min(1, w_b)`.
    Bernoulli,
    /// Births feed an undetected Poisson intensity; each measurement may start a Bernoulli.
    #[default]
    Poisson,
}

/// How the truncated set of global hypotheses is collapsed back to one MB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Best,
    #[default]
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_hypotheses: usize,
    pub prune_threshold: f64,
    pub reduction: Reduction,
    pub birth: BirthMode,
    pub gate_probability: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_hypotheses: 100,
            prune_threshold: 1e-3,
            reduction: Reduction::Marginal,
            birth: BirthMode::Poisson,
            gate_probability: 0.999,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_hypotheses == 0 {
            return Err(Error::Config("filter.max_hypotheses must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::Config("filter.prune_threshold must lie in [0, 1)".into()));
        }
        if !(self.gate_probability > 0.0 && self.gate_probability <= 1.0) {
            return Err(Error::Config("filter.gate_probability must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Filtering density at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub time: usize,
    pub posterior: MultiBernoulli,
    /// Intensity of targets that exist but were never detected. Empty in Bernoulli birth mode.
    pub undetected: GaussianMixture,
}

impl FilterState {
    /// State before the first prediction.
    pub fn initial() -> Self {
        Self { time: 0, posterior: MultiBernoulli::default(), undetected: GaussianMixture::empty() }
    }
}

/// Propagates every Bernoulli and adds births according to `birth`.
pub fn filter_predict(state: &FilterState, model: &MotionModel, birth: BirthMode) -> Result<FilterState> {
    let ps = model.survival_probability;
    let mut components = Vec::with_capacity(state.posterior.len() + model.birth.len());
    for b in &state.posterior.components {
        components.push(Bernoulli { existence: b.existence * ps, density: predict_moments(&b.density, model)? });
    }
    let mut undetected = GaussianMixture::empty();
    match birth {
        BirthMode::Bernoulli => {
            for (w, g) in model.birth.iter() {
                components.push(Bernoulli { existence: w.min(1.0), density: g.clone() });
            }
        }
        BirthMode::Poisson => {
            for (w, g) in state.undetected.iter() {
                if w * ps >= UNDETECTED_PRUNE {
                    undetected.weights.push(w * ps);
                    undetected.components.push(predict_moments(g, model)?);
                }
            }
            for (w, g) in model.birth.iter() {
                undetected.weights.push(w);
                undetected.components.push(g.clone());
            }
        }
    }
    Ok(FilterState { time: state.time + 1, posterior: MultiBernoulli::new(components), undetected })
}

/// Kalman quantities of one Gaussian against the sensor.
struct Innovation {
    predicted: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    gain: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
}

impl Innovation {
    fn new(g: &GaussianDensity, sensor: &SensorModel) -> Result<Self> {
        let h = &sensor.measurement_matrix;
        let ph_t = &g.cov * h.transpose();
        let mut s = h * &ph_t + &sensor.measurement_noise;
        symmetrize(&mut s);
        let chol = Cholesky::new(s).ok_or_else(|| numerical("innovation covariance is not positive definite"))?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (h.nrows() as f64 * std::f64::consts::TAU.ln() + log_det);
        // K = P H^T S^-1 = (S^-1 H P)^T.
        let gain = chol.solve(&ph_t.transpose()).transpose();
        let mut posterior_cov = &g.cov - &gain * h * &g.cov;
        symmetrize(&mut posterior_cov);
        let posterior_cov = gaussian::repair_psd(posterior_cov)?;
        Ok(Self { predicted: h * &g.mean, chol, log_norm, gain, posterior_cov })
    }

    fn distance_sq(&self, z: &DVector<f64>) -> f64 {
        let d = z - &self.predicted;
        let y = self.chol.l_dirty().solve_lower_triangular(&d).expect("triangular factor is nonsingular");
        y.norm_squared()
    }

    fn log_likelihood(&self, z: &DVector<f64>) -> f64 {
        self.log_norm - 0.5 * self.distance_sq(z)
    }

    fn update(&self, g: &GaussianDensity, z: &DVector<f64>) -> GaussianDensity {
        GaussianDensity::from_parts(&g.mean + &self.gain * (z - &self.predicted), self.posterior_cov.clone())
    }
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Existence after a missed detection.
fn missed_existence(r: f64, pd: f64) -> f64 {
    let denom = 1.0 - r * pd;
    if denom <= 0.0 {
        0.0
    } else {
        (r * (1.0 - pd) / denom).clamp(0.0, 1.0)
    }
}

/// Bernoulli started by a measurement from the undetected intensity, with its
/// log association weight `ln(clutter density + p_D * lambda_u(z))`.
fn new_track(
    undetected: &GaussianMixture,
    innovations: &[Innovation],
    z: &DVector<f64>,
    sensor: &SensorModel,
) -> (f64, Option<Bernoulli>) {
    let pd = sensor.detection_probability;
    let ln_clutter = ln_or_neg_inf(sensor.clutter_density());
    let mut parts = Vec::with_capacity(undetected.len());
    let mut log_w = Vec::with_capacity(undetected.len());
    if pd > 0.0 {
        for ((w, g), inn) in undetected.iter().zip(innovations) {
            log_w.push(w.ln() + pd.ln() + inn.log_likelihood(z));
            parts.push(inn.update(g, z));
        }
    }
    let ln_detect = log_sum_exp(&log_w);
    let ln_total = log_sum_exp(&[ln_clutter, ln_detect]).max(LOG_FLOOR);
    if ln_detect == f64::NEG_INFINITY {
        return (ln_total, None);
    }
    let weights: Vec<f64> = log_w.iter().map(|l| (l - ln_detect).exp()).collect();
    let r = (ln_detect - ln_total).exp().clamp(0.0, 1.0);
    let density = moment_match(&weights, &parts).expect("weights are positive");
    (ln_total, Some(Bernoulli { existence: r, density }))
}

/// Bayes update with one scan.
pub fn filter_update(
    state: &FilterState,
    measurements: &[DVector<f64>],
    sensor: &SensorModel,
    model_dim: usize,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    let mz = sensor.measurement_dim();
    if sensor.measurement_matrix.ncols() != model_dim {
        return Err(domain("measurement matrix does not match the state dimension"));
    }
    if let Some(z) = measurements.iter().find(|z| z.len() != mz) {
        return Err(domain(format!("measurement has dimension {} but the sensor has {mz}", z.len())));
    }
    if cfg.max_hypotheses == 0 {
        return Err(domain("max_hypotheses must be at least one"));
    }
    let pd = sensor.detection_probability;
    let gate = gate_threshold(cfg.gate_probability, mz)?;
    let prior = &state.posterior.components;
    let nb = prior.len();
    let nz = measurements.len();

    let active: Vec<bool> = prior.iter().map(|b| b.existence > 0.0 && pd > 0.0).collect();
    let innovations: Vec<Option<Innovation>> = prior
        .iter()
        .zip(&active)
        .map(|(b, &on)| on.then(|| Innovation::new(&b.density, sensor)).transpose())
        .collect::<Result<_>>()?;
    let undetected_innovations: Vec<Innovation> = match cfg.birth {
        BirthMode::Poisson => state.undetected.components.iter().map(|g| Innovation::new(g, sensor)).collect::<Result<_>>()?,
        BirthMode::Bernoulli => Vec::new(),
    };
    let undetected = match cfg.birth {
        BirthMode::Poisson => state.undetected.clone(),
        BirthMode::Bernoulli => GaussianMixture::empty(),
    };

    // Detection log weights relative to a miss, gated. Nodes: Bernoullis then measurements.
    let mut ratio = vec![vec![f64::NEG_INFINITY; nz]; nb];
    let mut parent: Vec<usize> = (0..nb + nz).collect();
    for i in 0..nb {
        let Some(inn) = &innovations[i] else { continue };
        let r = prior[i].existence;
        let ln_miss = (1.0 - r * pd).ln().max(LOG_FLOOR);
        for (j, z) in measurements.iter().enumerate() {
            let d2 = inn.distance_sq(z);
            if d2 <= gate {
                ratio[i][j] = r.ln() + pd.ln() + inn.log_norm - 0.5 * d2 - ln_miss;
                union(&mut parent, i, nb + j);
            }
        }
    }
    let starts: Vec<(f64, Option<Bernoulli>)> =
        measurements.iter().map(|z| new_track(&undetected, &undetected_innovations, z, sensor)).collect();

    let mut posterior: Vec<Bernoulli> = Vec::with_capacity(nb + nz);
    let mut updated: Vec<Option<Bernoulli>> = vec![None; nb];
    let mut born: Vec<Option<Bernoulli>> = vec![None; nz];

    let mut clusters: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut cluster_of = vec![usize::MAX; nb + nz];
    for node in 0..nb + nz {
        let root = find(&mut parent, node);
        if cluster_of[root] == usize::MAX {
            cluster_of[root] = clusters.len();
            clusters.push((Vec::new(), Vec::new()));
        }
        let c = cluster_of[root];
        if node < nb {
            clusters[c].0.push(node);
        } else {
            clusters[c].1.push(node - nb);
        }
    }

    for (bern, meas) in &clusters {
        if meas.is_empty() {
            for &i in bern {
                let b = &prior[i];
                updated[i] = Some(Bernoulli { existence: missed_existence(b.existence, pd), density: b.density.clone() });
            }
            continue;
        }
        if bern.is_empty() {
            for &j in meas {
                born[j] = starts[j].1.clone();
            }
            continue;
        }
        // Rows are measurements; columns are the cluster's Bernoullis then one new-track slot per measurement.
        let (rows, nbc) = (meas.len(), bern.len());
        let mut cost = CostMatrix::forbidden(rows, nbc + rows);
        for (a, &j) in meas.iter().enumerate() {
            for (c, &i) in bern.iter().enumerate() {
                if ratio[i][j].is_finite() {
                    cost.set(a, c, -ratio[i][j].max(LOG_FLOOR))?;
                }
            }
            cost.set(a, nbc + a, -starts[j].0)?;
        }
        let mut hyps = murty_kbest(&cost, cfg.max_hypotheses);
        if cfg.reduction == Reduction::Best {
            hyps.truncate(1);
        }
        let neg: Vec<f64> = hyps.iter().map(|h| -h.cost).collect();
        let ln_norm = log_sum_exp(&neg);
        let weights: Vec<f64> = neg.iter().map(|l| (l - ln_norm).exp()).collect();

        for (c, &i) in bern.iter().enumerate() {
            let b = &prior[i];
            let inn = innovations[i].as_ref().expect("clustered Bernoullis are active");
            let r_miss = missed_existence(b.existence, pd);
            let mut mass = Vec::new();
            let mut parts = Vec::new();
            let mut miss_weight = 0.0;
            for (h, w) in hyps.iter().zip(&weights) {
                match h.row_to_col.iter().position(|&col| col == c) {
                    Some(a) => {
                        mass.push(*w);
                        parts.push(inn.update(&b.density, &measurements[meas[a]]));
                    }
                    None => miss_weight += w,
                }
            }
            if miss_weight * r_miss > 0.0 {
                mass.push(miss_weight * r_miss);
                parts.push(b.density.clone());
            }
            let existence: f64 = mass.iter().sum::<f64>().clamp(0.0, 1.0);
            let density = if mass.len() == 1 {
                parts.pop().expect("one part")
            } else {
                moment_match(&mass, &parts).unwrap_or_else(|| b.density.clone())
            };
            updated[i] = Some(Bernoulli { existence, density });
        }
        for (a, &j) in meas.iter().enumerate() {
            let Some(start) = &starts[j].1 else { continue };
            let p_new: f64 =
                hyps.iter().zip(&weights).filter(|(h, _)| h.row_to_col[a] == nbc + a).map(|(_, w)| w).sum();
            born[j] = Some(Bernoulli { existence: (p_new * start.existence).clamp(0.0, 1.0), density: start.density.clone() });
        }
    }

    for (i, b) in prior.iter().enumerate() {
        let next = if active[i] { updated[i].take().expect("every active Bernoulli is clustered") } else { b.clone() };
        if next.existence >= cfg.prune_threshold {
            posterior.push(next);
        }
    }
    posterior.extend(born.into_iter().flatten().filter(|b| b.existence >= cfg.prune_threshold));

    let mut next_undetected = GaussianMixture::empty();
    for (w, g) in undetected.iter() {
        let w = w * (1.0 - pd);
        if w >= UNDETECTED_PRUNE {
            next_undetected.weights.push(w);
            next_undetected.components.push(g.clone());
        }
    }
    Ok(FilterState { time: state.time, posterior: MultiBernoulli::new(posterior), undetected: next_undetected })
}

/// Means of the `n*` most likely Bernoullis, where `n*` maximizes the cardinality pmf.
pub fn filter_estimate(state: &FilterState) -> Vec<DVector<f64>> {
    let comps = &state.posterior.components;
    let pmf = poisson_binomial(&state.posterior.existence());
    let mut n_star = 0;
    for (n, p) in pmf.iter().enumerate() {
        if *p > pmf[n_star] {
            n_star = n;
        }
    }
    let mut order: Vec<usize> = (0..comps.len()).collect();
    order.sort_by(|&a, &b| comps[b].existence.total_cmp(&comps[a].existence));
    order.into_iter().take(n_star).map(|i| comps[i].density.mean.clone()).collect()
}

/// Runs predict and update over every scan, returning the filtering density at each step.
pub fn run_filter(
    scans: &[Vec<DVector<f64>>],
    model: &MotionModel,
    sensor: &SensorModel,
    cfg: &FilterConfig,
) -> Result<Vec<FilterState>> {
    let mut state = FilterState::initial();
    let mut out = Vec::with_capacity(scans.len());
    for z in scans {
        let predicted = filter_predict(&state, model, cfg.birth)?;
        state = filter_update(&predicted, z, sensor, model.state_dim(), cfg)?;
        out.push(state.clone());
    }
    Ok(out)
}

/// Predicted undetected intensity at the step after `state`, used as the
/// smoother's birth intensity for trajectories that start there.
pub fn predicted_undetected(state: &FilterState, model: &MotionModel) -> Result<GaussianMixture> {
    Ok(filter_predict(state, model, BirthMode::Poisson)?.undetected)
}
