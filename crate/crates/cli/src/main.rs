//! `poisurv`: fit the joint survival model, run SIMEX, and run simulation
//! studies from the command line.

mod commands;
mod config;
mod keys;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad input files, configuration or flags (exit 2).
    Input(String),
    /// Numerical or I/O failure while running (exit 1).
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl From<poisurv::Error> for CliError {
    fn from(e: poisurv::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub fn internal<E: fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Internal(format!("{context}: {e}"))
}

/// How a successful run ended.
pub enum Status {
    Ok,
    /// Outputs written, but a convergence check failed (exit 3).
    ConvergenceWarning(String),
}

#[derive(Parser)]
#[command(name = "poisurv", version, about = "Joint survival model with a conditionally Poisson biomarker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixture joint model to a dataset; writes posterior-draws.csv,
    /// summary.csv, summary.txt and diagnostics.csv.
    #[command(after_help = keys::FIT)]
    Fit(commands::FitArgs),
    /// Run a simulation study; writes metrics.csv and raw-estimates.csv.
    #[command(after_help = keys::SIMULATE)]
    Simulate(commands::SimulateArgs),
    /// Fit POI-Gamma-SIMEX to a dataset; writes simex-curve.csv and simex-fit.csv.
    #[command(after_help = keys::SIMEX)]
    Simex(commands::SimexArgs),
    /// Sampling distribution of log BF10 across sample sizes; writes bf-study.csv.
    #[command(after_help = keys::BF_STUDY)]
    BfStudy(commands::BfStudyArgs),
    /// Write one simulated dataset (CSV, or JSON for a .json path).
    #[command(after_help = keys::GENERATE)]
    Generate(commands::GenerateArgs),
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// RNG seed. A random seed is drawn and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    fn resolve_seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s: u64 = rand::random();
            eprintln!("no --seed given; using --seed {s}");
            s
        })
    }
}

pub struct RunRecord {
    pub subcommand: &'static str,
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub settings: Value,
}

fn write_manifest(common: &Common, seed: u64, record: &RunRecord, seconds: f64) -> Result<(), CliError> {
    let manifest = json!({
        "subcommand": record.subcommand,
        "config_path": common.config.as_ref().map(|p| p.display().to_string()),
        "input_path": record.input.as_ref().map(|p| p.display().to_string()),
        "output_dir": record.out_dir.display().to_string(),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_seconds": seconds,
        "settings": record.settings,
    });
    let path = record.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(internal("manifest"))?;
    fs::write(&path, text + "\n").map_err(internal("writing manifest.json"))
}

pub fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let common = match &cli.command {
        Command::Fit(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Simex(a) => &a.common,
        Command::BfStudy(a) => &a.common,
        Command::Generate(a) => &a.common,
    }
    .clone();
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(internal("thread pool"))?;
    }
    let mut cfg = config::Config::load(common.config.as_deref())?;
    let seed = common.resolve_seed();
    let start = Instant::now();
    let (record, status) = match cli.command {
        Command::Fit(a) => commands::fit(&a, &mut cfg, seed)?,
        Command::Simulate(a) => commands::simulate(&a, &mut cfg, seed)?,
        Command::Simex(a) => commands::simex(&a, &mut cfg, seed)?,
        Command::BfStudy(a) => commands::bf_study(&a, &mut cfg, seed)?,
        Command::Generate(a) => commands::generate(&a, &mut cfg, seed)?,
    };
    write_manifest(&common, seed, &record, start.elapsed().as_secs_f64())?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::ConvergenceWarning(m)) => {
            eprintln!("warning: {m}");
            ExitCode::from(3)
        }
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
