//! `trajsmooth`: simulate, filter, smooth and evaluate multitarget scenarios.
//!
//! Stages exchange JSON files so each can be run on its own; `run` chains them
//! over every Monte Carlo run and writes the aggregate CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use trajsmooth::experiment::{self, rows_to_csv, run_rows, ExperimentConfig, Simulation};
use trajsmooth::filter::FilterState;
use trajsmooth::oracle::{run_instance, shipped_instances};
use trajsmooth::smoother::SmootherOutput;
use trajsmooth::Error;

/// Oracle discrepancies at or below this pass.
const ORACLE_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "trajsmooth", version, about = "Backward-simulation smoothing for sets of trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of smoother particles, overriding the configuration.
    #[arg(long)]
    particles: Option<usize>,
    /// Murty truncation size per backward step, overriding the configuration.
    #[arg(long)]
    hypotheses: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ground truth and scans for one run.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo run index.
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Forward-filter the scans of a simulation file.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Simulation JSON from `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Backward-simulate from a filter file.
    Smooth {
        #[command(flatten)]
        common: Common,
        /// Filter JSON from `filter`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score filter and smoother outputs of one run against its truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        simulation: PathBuf,
        #[arg(long)]
        filtered: PathBuf,
        #[arg(long)]
        smoothed: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage for all Monte Carlo runs and write the aggregate CSV.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify the smoothing identities on the shipped discrete instances.
    OracleCheck {
        /// Optional JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize, Deserialize)]
struct SimulationFile {
    run: usize,
    #[serde(flatten)]
    simulation: Simulation,
}

#[derive(Serialize, Deserialize)]
struct FilterFile {
    run: usize,
    states: Vec<FilterState>,
}

#[derive(Serialize, Deserialize)]
struct SmoothFile {
    run: usize,
    /// `None` when every particle failed.
    output: Option<SmootherOutput>,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn load_config(common: &Common, runs: Option<usize>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(n) = runs {
        cfg.runs = n;
    }
    if let Some(n) = common.particles {
        cfg.smoother.particles = n;
    }
    if let Some(m) = common.hypotheses {
        cfg.smoother.murty_m = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("cannot parse {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_text(path, &text)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { common, run, out } => {
            let cfg = load_config(&common, None)?;
            write_json(&out, &SimulationFile { run, simulation: experiment::simulate(&cfg, run)? })
        }
        Command::Filter { common, input, out } => {
            let cfg = load_config(&common, None)?;
            let sim: SimulationFile = read_json(&input)?;
            let states = experiment::filter(&cfg, &sim.simulation.scans)?;
            write_json(&out, &FilterFile { run: sim.run, states })
        }
        Command::Smooth { common, input, out } => {
            let cfg = load_config(&common, None)?;
            let filtered: FilterFile = read_json(&input)?;
            let output = match experiment::smooth(&cfg, &filtered.states, filtered.run) {
                Ok(o) => Some(o),
                Err(Error::Smoothing { step, reason }) => {
                    eprintln!("smoothing failed at step {step}: {reason}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            write_json(&out, &SmoothFile { run: filtered.run, output })
        }
        Command::Evaluate { common, simulation, filtered, smoothed, out } => {
            let cfg = load_config(&common, None)?;
            let sim: SimulationFile = read_json(&simulation)?;
            let filt: FilterFile = read_json(&filtered)?;
            let smooth: SmoothFile = read_json(&smoothed)?;
            if sim.run != filt.run || sim.run != smooth.run {
                return Err(Failure::Runtime("input files come from different runs".into()));
            }
            let result = experiment::evaluate_run(&cfg, sim.run, &sim.simulation.truth, &filt.states, smooth.output.as_ref());
            write_text(&out, &rows_to_csv(&run_rows(&result, cfg.scenario.horizon)))
        }
        Command::Run { common, runs, out } => {
            let cfg = load_config(&common, runs)?;
            let result = experiment::run_experiment(&cfg)?;
            if result.smoothing_failures > 0 {
                eprintln!("smoothing failed in {} of {} runs", result.smoothing_failures, cfg.runs);
            }
            write_text(&out, &rows_to_csv(&result.rows))
        }
        Command::OracleCheck { out } => {
            let mut reports = Vec::new();
            let mut ok = true;
            for inst in shipped_instances() {
                let r = run_instance(&inst)?;
                let pass = r.smoothing_gap <= ORACLE_TOLERANCE && r.ratio_gap <= ORACLE_TOLERANCE && r.prediction_gap <= ORACLE_TOLERANCE;
                ok &= pass;
                println!(
                    "{} {}: sets={} smoothing={:.3e} ratio={:.3e} prediction={:.3e} truncation={:.3e}",
                    if pass { "PASS" } else { "FAIL" },
                    r.name,
                    r.sets,
                    r.smoothing_gap,
                    r.ratio_gap,
                    r.prediction_gap,
                    r.truncation_mass
                );
                reports.push(r);
            }
            if let Some(path) = out {
                write_json(&path, &reports)?;
            }
            if ok {
                Ok(())
            } else {
                Err(Failure::Runtime("oracle identities violated".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("trajsmooth: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("trajsmooth: {m}");
            ExitCode::from(2)
        }
    }
}
