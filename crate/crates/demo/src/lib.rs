//! WebAssembly bindings for the browser demo. Every export returns a JSON string.

use nalgebra::{dvector, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use trajsmooth::experiment::{self, ExperimentConfig};
use trajsmooth::filter::filter_estimate;
use trajsmooth::multitarget::{Bernoulli, GaussianDensity, GaussianMixture, MotionModel, MultiBernoulli};
use trajsmooth::oracle::{run_instance, shipped_instances};
use trajsmooth::scenario::{Region, TargetSpec};
use trajsmooth::smoother::{extend_backward, smoother_estimate, Particle};
use trajsmooth::trajectory::{Trajectory, TrajectorySet};

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn error_json(e: impl std::fmt::Display) -> String {
    to_json(&serde_json::json!({ "error": e.to_string() }))
}

#[derive(Serialize)]
struct LinkingReport {
    draws: u32,
    analytic_straight: f64,
    empirical_straight: f64,
}

/// Two point-mass targets at `[2, -1]` and `[1, 1]`, two survivors at `[1, 0]` and
/// `[2, 0]`, constant-velocity transition with unit noise. Returns how often the
/// backward sampler links `[2, -1]` to `[1, 0]`, against the exact `e / (1 + e)`.
#[wasm_bindgen]
pub fn linking_frequencies(draws: u32, seed: u64) -> String {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let model = match MotionModel::new(f, DMatrix::identity(2, 2), 1.0, GaussianMixture::empty()) {
        Ok(m) => m,
        Err(e) => return error_json(e),
    };
    let components = [dvector![2.0, -1.0], dvector![1.0, 1.0]]
        .into_iter()
        .map(|m| Bernoulli::new(1.0, GaussianDensity::point_mass(m)))
        .collect::<Result<Vec<_>, _>>();
    let mb = match components {
        Ok(c) => MultiBernoulli::new(c),
        Err(e) => return error_json(e),
    };
    let survivors = [dvector![1.0, 0.0], dvector![2.0, 0.0]]
        .into_iter()
        .map(|x| Trajectory::new(2, vec![x]))
        .collect::<Result<Vec<_>, _>>()
        .and_then(TrajectorySet::new);
    let particle = match survivors {
        Ok(s) => Particle::new(2, s, 0.0),
        Err(e) => return error_json(e),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut straight = 0u32;
    for _ in 0..draws {
        let out = match extend_backward(&particle, &mb, 1, &model, &model.birth, 30, f64::INFINITY, &mut rng) {
            Ok(p) => p,
            Err(e) => return error_json(e),
        };
        let linked = out
            .trajectories
            .iter()
            .any(|t| t.states.len() == 2 && t.states[0] == dvector![2.0, -1.0] && t.states[1] == dvector![1.0, 0.0]);
        straight += u32::from(linked);
    }
    let e = std::f64::consts::E;
    to_json(&LinkingReport {
        draws,
        analytic_straight: e / (1.0 + e),
        empirical_straight: if draws == 0 { f64::NAN } else { f64::from(straight) / f64::from(draws) },
    })
}

#[derive(Serialize)]
struct Track {
    birth: usize,
    points: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct TrackingReport {
    horizon: usize,
    half_width: f64,
    truth: Vec<Track>,
    scans: Vec<Vec<[f64; 2]>>,
    filter: Vec<Vec<[f64; 2]>>,
    smoother: Vec<Track>,
    filter_gospa: f64,
    smoother_gospa: f64,
}

fn xy(x: &DVector<f64>) -> [f64; 2] {
    [x[0], x[1]]
}

fn tracks(set: &TrajectorySet) -> Vec<Track> {
    set.iter().map(|t| Track { birth: t.birth_time, points: t.states.iter().map(xy).collect() }).collect()
}

/// Demo scenario: three targets crossing the center of a 100 m square at step 15.
fn demo_config(seed: u64, clutter_rate: f64, detection_probability: f64, particles: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seed, runs: 1, ..ExperimentConfig::default() };
    let horizon = 30;
    let s = &mut cfg.scenario;
    s.horizon = horizon;
    s.region = Region { min: vec![-50.0, -50.0], max: vec![50.0, 50.0] };
    s.birth.std = vec![50.0, 50.0, 2.0, 2.0];
    s.clutter_rate = clutter_rate;
    s.detection_probability = detection_probability;
    s.targets = (0..3)
        .map(|i| {
            let angle = std::f64::consts::PI * (2 * i) as f64 / 3.0 + 0.4;
            let (vx, vy) = (2.0 * angle.cos(), 2.0 * angle.sin());
            let lead = 14.0;
            TargetSpec { birth: 1, death: horizon + 1, initial: vec![-vx * lead, -vy * lead, vx, vy] }
        })
        .collect();
    cfg.smoother.particles = particles;
    cfg
}

/// Simulates the demo scenario, filters it, smooths it and scores both.
#[wasm_bindgen]
pub fn track_scenario(seed: u64, clutter_rate: f64, detection_probability: f64, particles: u32) -> String {
    let cfg = demo_config(seed, clutter_rate, detection_probability, particles.max(1) as usize);
    if let Err(e) = cfg.validate() {
        return error_json(e);
    }
    let result = (|| -> trajsmooth::Result<TrackingReport> {
        let sim = experiment::simulate(&cfg, 0)?;
        let states = experiment::filter(&cfg, &sim.scans)?;
        let smoothed = experiment::smooth(&cfg, &states, 0)?;
        let best = smoother_estimate(&smoothed.particles).expect("nonempty particle set");
        let scored = experiment::evaluate_run(&cfg, 0, &sim.truth, &states, Some(&smoothed));
        Ok(TrackingReport {
            horizon: cfg.scenario.horizon,
            half_width: 50.0,
            truth: tracks(&sim.truth),
            scans: sim.scans.iter().map(|z| z.iter().map(xy).collect()).collect(),
            filter: states.iter().map(|s| filter_estimate(s).iter().map(xy).collect()).collect(),
            smoother: tracks(&best.means),
            filter_gospa: scored.filter.summed_gospa(),
            smoother_gospa: scored.smoother.as_ref().map_or(f64::NAN, |m| m.summed_gospa()),
        })
    })();
    result.map_or_else(error_json, |r| to_json(&r))
}

/// Runs the exhaustive discrete checks and returns one report per instance.
#[wasm_bindgen]
pub fn oracle_reports() -> String {
    let reports: Result<Vec<_>, _> = shipped_instances().iter().map(run_instance).collect();
    reports.map_or_else(error_json, |r| to_json(&r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linking_matches_the_exact_probability() {
        let v: serde_json::Value = serde_json::from_str(&linking_frequencies(4000, 1)).unwrap();
        let a = v["analytic_straight"].as_f64().unwrap();
        let e = v["empirical_straight"].as_f64().unwrap();
        assert!((a - 0.731_058_578_6).abs() < 1e-9);
        assert!((a - e).abs() < 0.03, "{e}");
    }

    #[test]
    fn tracking_returns_every_layer() {
        let v: serde_json::Value = serde_json::from_str(&track_scenario(3, 5.0, 0.9, 30)).unwrap();
        assert!(v.get("error").is_none(), "{v}");
        assert_eq!(v["truth"].as_array().unwrap().len(), 3);
        assert_eq!(v["scans"].as_array().unwrap().len(), 30);
        assert_eq!(v["filter"].as_array().unwrap().len(), 30);
        assert!(v["smoother_gospa"].as_f64().unwrap() <= v["filter_gospa"].as_f64().unwrap());
    }

    #[test]
    fn invalid_inputs_report_errors() {
        let v: serde_json::Value = serde_json::from_str(&track_scenario(3, -1.0, 0.9, 30)).unwrap();
        assert!(v["error"].as_str().is_some());
    }

    #[test]
    fn oracle_reports_cover_the_shipped_instances() {
        let v: serde_json::Value = serde_json::from_str(&oracle_reports()).unwrap();
        assert!(v.as_array().unwrap().len() >= 5);
    }
}
