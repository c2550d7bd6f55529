//! Ground truth and measurement generation for crossing-target scenarios.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::SensorModel;
use crate::gaussian::sqrt_factor;
use crate::multitarget::{GaussianDensity, GaussianMixture, MotionModel};
use crate::trajectory::{Trajectory, TrajectorySet};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Region {
    pub fn dims(&self) -> usize {
        self.min.len()
    }

    pub fn volume(&self) -> f64 {
        self.min.iter().zip(&self.max).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.min.iter().zip(&self.max)).all(|(x, (a, b))| a <= x && x <= b)
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// One scheduled target: present for `birth <= k < death`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub birth: usize,
    pub death: usize,
    pub initial: Vec<f64>,
}

/// Poisson birth intensity made of one Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BirthSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: usize,
    pub region: Region,
    pub targets: Vec<TargetSpec>,
    pub dt: f64,
    pub process_noise_std: f64,
    pub survival_probability: f64,
    pub birth: BirthSpec,
    pub measurement_noise_std: f64,
    pub detection_probability: f64,
    pub clutter_rate: f64,
}

/// Time step at which the default targets pass the region center.
pub const DEFAULT_CROSSING_TIME: usize = 30;

impl Default for ScenarioConfig {
    /// Six targets on a 200 m x 200 m region converging on the center near step 30.
    fn default() -> Self {
        let schedule = [(1, 61), (1, 51), (5, 61), (10, 61), (1, 41), (15, 56)];
        let speed = 1.5;
        let targets = schedule
            .iter()
            .enumerate()
            .map(|(i, &(birth, death))| {
                let angle = std::f64::consts::PI * (i as f64) / 3.0 + 0.3;
                let (vx, vy) = (speed * angle.cos(), speed * angle.sin());
                let lead = (DEFAULT_CROSSING_TIME - birth) as f64;
                let round = |v: f64| (v * 1e3).round() / 1e3;
                TargetSpec { birth, death, initial: vec![round(-vx * lead), round(-vy * lead), round(vx), round(vy)] }
            })
            .collect();
        Self {
            horizon: 60,
            region: Region { min: vec![-100.0, -100.0], max: vec![100.0, 100.0] },
            targets,
            dt: 1.0,
            process_noise_std: 0.1,
            survival_probability: 0.97,
            birth: BirthSpec { weight: 0.1, mean: vec![0.0; 4], std: vec![100.0, 100.0, 2.0, 2.0] },
            measurement_noise_std: 0.1,
            detection_probability: 0.7,
            clutter_rate: 30.0,
        }
    }
}

impl ScenarioConfig {
    pub fn position_dims(&self) -> usize {
        self.region.dims()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.position_dims()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let d = self.position_dims();
        if d == 0 || self.region.max.len() != d {
            return cfg("scenario.region.min and scenario.region.max must have the same nonzero length".into());
        }
        if self.region.min.iter().zip(&self.region.max).any(|(a, b)| !(a < b)) {
            return cfg("scenario.region.min must be below scenario.region.max in every dimension".into());
        }
        if self.horizon == 0 {
            return cfg("scenario.horizon must be at least 1".into());
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !(1 <= t.birth && t.birth < t.death && t.death <= self.horizon + 1) {
                return cfg(format!("scenario.targets[{i}]: need 1 <= birth < death <= horizon + 1"));
            }
            if t.initial.len() != 2 * d {
                return cfg(format!("scenario.targets[{i}].initial must have {} entries", 2 * d));
            }
            if !self.region.contains(&t.initial[..d]) {
                return cfg(format!("scenario.targets[{i}].initial lies outside the region"));
            }
        }
        if self.birth.mean.len() != 2 * d || self.birth.std.len() != 2 * d {
            return cfg(format!("scenario.birth.mean and scenario.birth.std must have {} entries", 2 * d));
        }
        if !(self.birth.weight >= 0.0) || self.birth.std.iter().any(|s| !(*s > 0.0)) {
            return cfg("scenario.birth.weight must be nonnegative and scenario.birth.std positive".into());
        }
        if !(self.dt > 0.0) || !(self.process_noise_std >= 0.0) || !(self.measurement_noise_std > 0.0) {
            return cfg("scenario.dt and scenario.measurement_noise_std must be positive, scenario.process_noise_std nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.survival_probability) {
            return cfg("scenario.survival_probability must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.detection_probability) {
            return cfg("scenario.detection_probability must lie in [0, 1]".into());
        }
        if !(self.clutter_rate >= 0.0 && self.clutter_rate.is_finite()) {
            return cfg("scenario.clutter_rate must be finite and nonnegative".into());
        }
        Ok(())
    }

    pub fn birth_intensity(&self) -> Result<GaussianMixture> {
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(self.birth.std.len(), self.birth.std.iter().map(|s| s * s)));
        GaussianMixture::single(self.birth.weight, GaussianDensity::new(DVector::from_vec(self.birth.mean.clone()), cov)?)
    }

    pub fn motion_model(&self) -> Result<MotionModel> {
        MotionModel::constant_velocity(
            self.position_dims(),
            self.dt,
            self.process_noise_std,
            self.survival_probability,
            self.birth_intensity()?,
        )
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        SensorModel::position(
            self.position_dims(),
            self.state_dim(),
            self.measurement_noise_std,
            self.detection_probability,
            self.clutter_rate,
            self.region.volume(),
        )
    }
}

fn gaussian_noise<R: Rng + ?Sized>(sqrt: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = sqrt.ncols();
    sqrt * DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Propagates every scheduled target through the motion model.
pub fn generate_truth<R: Rng + ?Sized>(cfg: &ScenarioConfig, model: &MotionModel, rng: &mut R) -> Result<TrajectorySet> {
    cfg.validate()?;
    let sqrt_q = sqrt_factor(&model.process_noise);
    let mut out = Vec::with_capacity(cfg.targets.len());
    for t in &cfg.targets {
        let mut states = vec![DVector::from_vec(t.initial.clone())];
        for _ in t.birth + 1..t.death {
            let prev = states.last().expect("nonempty");
            let next = &model.transition * prev + gaussian_noise(&sqrt_q, rng);
            states.push(next);
        }
        out.push(Trajectory::new(t.birth, states)?);
    }
    TrajectorySet::new(out)
}

/// Scans `1..=horizon`: detections of present targets with probability `p_D`
/// followed by Poisson clutter uniform over `region`.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &TrajectorySet,
    sensor: &SensorModel,
    region: &Region,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if region.dims() != sensor.measurement_dim() {
        return Err(Error::Domain("region and measurement dimensions differ".into()));
    }
    let sqrt_r = sqrt_factor(&sensor.measurement_noise);
    let clutter = if sensor.clutter_rate > 0.0 {
        Some(Poisson::new(sensor.clutter_rate).map_err(|e| Error::Domain(e.to_string()))?)
    } else {
        None
    };
    let mut scans = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let mut z = Vec::new();
        for t in truth.iter() {
            if let Some(x) = t.state_at(k) {
                if rng.random::<f64>() < sensor.detection_probability {
                    z.push(&sensor.measurement_matrix * x + gaussian_noise(&sqrt_r, rng));
                }
            }
        }
        let count = clutter.as_ref().map_or(0, |p| p.sample(rng) as usize);
        for _ in 0..count {
            z.push(DVector::from_iterator(
                region.dims(),
                region.min.iter().zip(&region.max).map(|(a, b)| rng.random_range(*a..*b)),
            ));
        }
        scans.push(z);
    }
    Ok(scans)
}
