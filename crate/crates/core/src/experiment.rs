//! Monte Carlo experiment runner: simulate, filter, smooth and evaluate, with CSV output.

use std::fmt::Write as _;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{filter_estimate, predicted_undetected, run_filter, FilterConfig, FilterState};
use crate::metrics::{gospa, positions, track_switches_per_step, GospaResult};
use crate::multitarget::{GaussianMixture, MultiBernoulli};
use crate::rng;
use crate::scenario::{generate_measurements, generate_truth, ScenarioConfig};
use crate::smoother::{backward_simulate, smoother_estimate, BirthSchedule, SmootherBirth, SmootherConfig, SmootherOutput};
use crate::trajectory::TrajectorySet;

/// Stream tags under a run's seed.
const TAG_SCENARIO: u64 = 1;
const TAG_SMOOTHER: u64 = 2;

/// Exact CSV header.
pub const CSV_HEADER: &str = "k,method,gospa_total,gospa_loc,gospa_missed,gospa_false,switches,runs";

/// Which states of the selected smoother particle are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SmootherStates {
    /// Means given the particle's sampled associations.
    #[default]
    Mean,
    /// The sampled states themselves.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub gospa_c: f64,
    pub gospa_p: f64,
    /// Distance beyond which an estimate is not paired with a truth for switch counting.
    pub switch_cutoff: f64,
    pub smoother_states: SmootherStates,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { gospa_c: 40.0, gospa_p: 1.0, switch_cutoff: 40.0, smoother_states: SmootherStates::Mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: usize,
    pub scenario: ScenarioConfig,
    pub filter: FilterConfig,
    pub smoother: SmootherConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 20,
            scenario: ScenarioConfig::default(),
            filter: FilterConfig::default(),
            smoother: SmootherConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; unknown keys and malformed values are config errors.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.filter.validate()?;
        self.smoother.validate()?;
        let e = &self.evaluation;
        if !(e.gospa_c > 0.0 && e.gospa_c.is_finite()) {
            return Err(Error::Config("evaluation.gospa_c must be positive".into()));
        }
        if !(e.gospa_p >= 1.0 && e.gospa_p.is_finite()) {
            return Err(Error::Config("evaluation.gospa_p must be at least 1".into()));
        }
        if !(e.switch_cutoff > 0.0) {
            return Err(Error::Config("evaluation.switch_cutoff must be positive".into()));
        }
        Ok(())
    }

    /// Root seed of Monte Carlo run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        rng::derive_seed(self.seed, run as u64, 0)
    }
}

/// Ground truth and scans of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub truth: TrajectorySet,
    /// `scans[k - 1]` holds the measurements at step `k`.
    pub scans: Vec<Vec<DVector<f64>>>,
}

pub fn simulate(cfg: &ExperimentConfig, run: usize) -> Result<Simulation> {
    let model = cfg.scenario.motion_model()?;
    let sensor = cfg.scenario.sensor_model()?;
    let mut r = rng::stream(cfg.run_seed(run), TAG_SCENARIO, 0);
    let truth = generate_truth(&cfg.scenario, &model, &mut r)?;
    let scans = generate_measurements(&truth, &sensor, &cfg.scenario.region, cfg.scenario.horizon, &mut r)?;
    Ok(Simulation { truth, scans })
}

pub fn filter(cfg: &ExperimentConfig, scans: &[Vec<DVector<f64>>]) -> Result<Vec<FilterState>> {
    run_filter(scans, &cfg.scenario.motion_model()?, &cfg.scenario.sensor_model()?, &cfg.filter)
}

pub fn smooth(cfg: &ExperimentConfig, states: &[FilterState], run: usize) -> Result<SmootherOutput> {
    let model = cfg.scenario.motion_model()?;
    let filters: Vec<MultiBernoulli> = states.iter().map(|s| s.posterior.clone()).collect();
    let per_step: Vec<GaussianMixture>;
    let births = match cfg.smoother.birth {
        SmootherBirth::Model => BirthSchedule::Model,
        SmootherBirth::Undetected => {
            per_step = states[..states.len().saturating_sub(1)]
                .iter()
                .map(|s| predicted_undetected(s, &model))
                .collect::<Result<_>>()?;
            BirthSchedule::PerStep(&per_step)
        }
    };
    backward_simulate(&filters, &model, births, &cfg.smoother, rng::derive_seed(cfg.run_seed(run), TAG_SMOOTHER, 0))
}

/// Per-step metrics of one method in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub gospa: Vec<GospaResult>,
    /// Per-step switch counts; `None` when the method has no trajectory identities.
    pub switches: Option<Vec<usize>>,
}

impl MethodMetrics {
    pub fn summed_gospa(&self) -> f64 {
        self.gospa.iter().map(|g| g.total).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub filter: MethodMetrics,
    /// `None` if every smoother particle failed.
    pub smoother: Option<MethodMetrics>,
    pub estimated_trajectories: Option<usize>,
    pub restarts: usize,
    pub failed_particles: usize,
}

pub fn evaluate_filter(cfg: &ExperimentConfig, truth: &TrajectorySet, states: &[FilterState]) -> MethodMetrics {
    let dims = cfg.scenario.position_dims();
    let e = &cfg.evaluation;
    let gospa = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let est = positions(&filter_estimate(s), dims);
            gospa(&est, &positions(&truth.states_at(i + 1), dims), e.gospa_c, e.gospa_p)
        })
        .collect();
    MethodMetrics { gospa, switches: None }
}

pub fn evaluate_trajectories(cfg: &ExperimentConfig, truth: &TrajectorySet, estimate: &TrajectorySet) -> MethodMetrics {
    let dims = cfg.scenario.position_dims();
    let e = &cfg.evaluation;
    let horizon = cfg.scenario.horizon;
    let gospa = (1..=horizon)
        .map(|k| {
            let est = positions(&estimate.states_at(k), dims);
            gospa(&est, &positions(&truth.states_at(k), dims), e.gospa_c, e.gospa_p)
        })
        .collect();
    let switches = track_switches_per_step(estimate, truth, e.switch_cutoff, dims, horizon);
    MethodMetrics { gospa, switches: Some(switches) }
}

/// Scores one run. `smoothed` is `None` when the smoother lost every particle.
pub fn evaluate_run(
    cfg: &ExperimentConfig,
    run: usize,
    truth: &TrajectorySet,
    states: &[FilterState],
    smoothed: Option<&SmootherOutput>,
) -> RunResult {
    let filter_metrics = evaluate_filter(cfg, truth, states);
    let best = smoothed.and_then(|out| smoother_estimate(&out.particles).map(|b| (out, b)));
    match best {
        Some((out, best)) => {
            let estimate = match cfg.evaluation.smoother_states {
                SmootherStates::Mean => &best.means,
                SmootherStates::Sample => &best.trajectories,
            };
            RunResult {
                run,
                filter: filter_metrics,
                smoother: Some(evaluate_trajectories(cfg, truth, estimate)),
                estimated_trajectories: Some(estimate.len()),
                restarts: out.restarts,
                failed_particles: out.failed,
            }
        }
        None => RunResult {
            run,
            filter: filter_metrics,
            smoother: None,
            estimated_trajectories: None,
            restarts: smoothed.map_or(0, |o| o.restarts),
            failed_particles: cfg.smoother.particles,
        },
    }
}

/// Simulates, filters, smooths and evaluates run `run`. A smoother that loses every
/// particle is recorded as missing rather than failing the run.
pub fn run_single(cfg: &ExperimentConfig, run: usize) -> Result<RunResult> {
    let sim = simulate(cfg, run)?;
    let states = filter(cfg, &sim.scans)?;
    let smoothed = match smooth(cfg, &states, run) {
        Ok(out) => Some(out),
        Err(Error::Smoothing { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(evaluate_run(cfg, run, &sim.truth, &states, smoothed.as_ref()))
}

/// Mean over contributing runs of one method at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub k: usize,
    pub method: String,
    pub gospa: GospaResult,
    /// `NaN` when the method has no switch counts.
    pub switches: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub runs: Vec<RunResult>,
    pub rows: Vec<AggregateRow>,
    pub smoothing_failures: usize,
}

fn mean_rows(method: &str, metrics: &[&MethodMetrics], horizon: usize) -> Vec<AggregateRow> {
    let n = metrics.len();
    (0..horizon)
        .map(|i| {
            let mut g = GospaResult::default();
            let mut sw = 0.0;
            for m in metrics {
                let x = &m.gospa[i];
                g.total += x.total;
                g.localization += x.localization;
                g.missed += x.missed;
                g.false_ += x.false_;
                sw += m.switches.as_ref().map_or(f64::NAN, |s| s[i] as f64);
            }
            let d = n as f64;
            let gospa = if n == 0 {
                GospaResult { total: f64::NAN, localization: f64::NAN, missed: f64::NAN, false_: f64::NAN }
            } else {
                GospaResult { total: g.total / d, localization: g.localization / d, missed: g.missed / d, false_: g.false_ / d }
            };
            AggregateRow { k: i + 1, method: method.into(), gospa, switches: if n == 0 { f64::NAN } else { sw / d }, runs: n }
        })
        .collect()
}

/// Aggregates per-run results in run order.
pub fn aggregate(results: Vec<RunResult>, horizon: usize) -> ExperimentResult {
    let filters: Vec<&MethodMetrics> = results.iter().map(|r| &r.filter).collect();
    let smoothers: Vec<&MethodMetrics> = results.iter().filter_map(|r| r.smoother.as_ref()).collect();
    let mut rows = mean_rows("filter", &filters, horizon);
    rows.extend(mean_rows("smoother", &smoothers, horizon));
    let smoothing_failures = results.len() - smoothers.len();
    ExperimentResult { runs: results, rows, smoothing_failures }
}

/// Runs every Monte Carlo run and aggregates. Runs execute concurrently when the
/// `parallel` feature is on; results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    #[cfg(feature = "parallel")]
    let results: Vec<RunResult> = {
        use rayon::prelude::*;
        (0..cfg.runs).into_par_iter().map(|r| run_single(cfg, r)).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<RunResult> = (0..cfg.runs).map(|r| run_single(cfg, r)).collect::<Result<_>>()?;
    Ok(aggregate(results, cfg.scenario.horizon))
}

/// Formats like C's `%.9g`.
pub fn format_g9(x: f64) -> String {
    const P: i32 = 9;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= P {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip(mantissa), sign, exp.abs())
    } else {
        strip(&format!("{:.*}", (P - 1 - exp) as usize, x))
    }
}

pub fn rows_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let g = &r.gospa;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.k,
            r.method,
            format_g9(g.total),
            format_g9(g.localization),
            format_g9(g.missed),
            format_g9(g.false_),
            format_g9(r.switches),
            r.runs
        )
        .expect("writing to a string");
    }
    out
}

/// Rows of a single run, with `runs = 1`.
pub fn run_rows(result: &RunResult, horizon: usize) -> Vec<AggregateRow> {
    aggregate(vec![result.clone()], horizon).rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (20.0, "20"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.00012345, "0.00012345"),
            (0.000012345, "1.2345e-05"),
            (-2.5, "-2.5"),
            (999999999.5, "1e+09"),
            (f64::NAN, "nan"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g9(x), want, "{x}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml("seed = 3\n[smoother]\nparticle = 10\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("particle")), "{err}");
        let err = ExperimentConfig::from_toml("[smoother]\nparticles = 0\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("smoother.particles")), "{err}");
        let err = ExperimentConfig::from_toml("[smoother]\ngate_probability = 1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("gate_probability")), "{err}");
        let ok = ExperimentConfig::from_toml("seed = 3\nruns = 2\n[smoother]\nparticles = 10\n").unwrap();
        assert_eq!((ok.seed, ok.runs, ok.smoother.particles, ok.smoother.murty_m), (3, 2, 10, 30));
    }

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig { runs: 3, ..ExperimentConfig::default() };
        cfg.scenario.horizon = 12;
        cfg.scenario.clutter_rate = 5.0;
        cfg.scenario.targets.truncate(2);
        for t in &mut cfg.scenario.targets {
            t.birth = 1;
            t.death = 13;
        }
        cfg.smoother.particles = 20;
        cfg
    }

    #[test]
    fn aggregate_is_the_mean_of_runs() {
        let cfg = small();
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2 * cfg.scenario.horizon);
        for row in &res.rows {
            let per_run: Vec<&MethodMetrics> = res
                .runs
                .iter()
                .filter_map(|r| if row.method == "filter" { Some(&r.filter) } else { r.smoother.as_ref() })
                .collect();
            assert_eq!(row.runs, per_run.len());
            let mut sum = 0.0;
            for m in &per_run {
                sum += m.gospa[row.k - 1].total;
            }
            assert_eq!(row.gospa.total, sum / per_run.len() as f64);
        }
        let csv = rows_to_csv(&res.rows);
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 1 + 2 * cfg.scenario.horizon);
        assert_eq!(csv, rows_to_csv(&run_experiment(&cfg).unwrap().rows));
    }

    #[test]
    fn clean_single_target_smoother_beats_filter() {
        let mut cfg = small();
        cfg.runs = 1;
        cfg.scenario.targets.truncate(1);
        cfg.scenario.detection_probability = 1.0;
        cfg.scenario.clutter_rate = 0.0;
        let r = run_single(&cfg, 0).unwrap();
        let s = r.smoother.expect("smoothing succeeds");
        assert!(s.summed_gospa() <= r.filter.summed_gospa(), "{} > {}", s.summed_gospa(), r.filter.summed_gospa());
    }
}
