//! `dgrkit` command-line front end.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 numeric or precondition
//! error.

mod output;
mod schema;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dgrkit::bounds::{
    estimate_instability, hidden_directions, instability_bounds, trajectory_bound_series,
};
use dgrkit::harness::run_scenario;
use dgrkit::regan::analyze;

use output::{BoundRow, InstabilityJson, SummaryJson};
use schema::{read_json, read_trajectory, ScenarioFile, SystemFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<dgrkit::Error> for CliError {
    fn from(e: dgrkit::Error) -> Self {
        match e {
            dgrkit::Error::InvalidInput(_) => CliError::Input(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "dgrkit", version, about = "Regularizability analysis and data-guided regulation")]
struct Cli {
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Spectral, PBH and certificate checks for a system file.
    Analyze { system: PathBuf },
    /// Run a scenario; writes trajectory.csv and summary.json.
    Simulate {
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides alpha in the config.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Squared instability-number bounds for orders 1..=t, plus the
    /// realized trajectory bound when a trajectory is given.
    Bounds {
        system: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        /// Trajectory CSV with columns x_1..x_n.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Local-ascent estimate of the instability number of order t.
    Instability {
        system: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    prepare_out(&cli.out)?;
    match cli.command {
        Command::Analyze { system } => {
            let sys = read_json::<SystemFile>(&system)?.to_system()?;
            let report = analyze(&sys)?;
            let path = cli.out.join("analysis.json");
            output::write_json(&path, &output::AnalyzeJson::from(&report))?;
            log::info!("wrote {}", path.display());
        }
        Command::Simulate { config, seed, alpha } => {
            let mut cfg = read_json::<ScenarioFile>(&config)?.to_config()?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            let (log, summary) = run_scenario(&cfg)?;
            output::write_trajectory(&cli.out.join("trajectory.csv"), &log)?;
            output::write_json(&cli.out.join("summary.json"), &SummaryJson::from(&summary))?;
            log::info!(
                "{} steps, peak norm {:e}, {} bound violations",
                summary.steps_run,
                summary.stats.peak_norm,
                summary.stats.bound_violations
            );
        }
        Command::Bounds {
            system,
            t,
            alpha,
            trajectory,
        } => {
            let sys = read_json::<SystemFile>(&system)?.to_system()?;
            let series = match trajectory {
                Some(path) => {
                    let states = read_trajectory(&path, sys.state_dim())?;
                    let (z, w) = hidden_directions(&states[..states.len().min(t)]);
                    Some(trajectory_bound_series(&sys, alpha, &z, &w)?)
                }
                None => None,
            };
            let rows = (1..=t)
                .map(|k| {
                    let (lo, hi) = instability_bounds(sys.a(), k)?;
                    Ok(BoundRow {
                        t: k,
                        m_lower: lo,
                        m_upper: hi,
                        l: series.as_ref().and_then(|s| s.l.get(k).copied()),
                    })
                })
                .collect::<Result<Vec<_>, dgrkit::Error>>()?;
            output::write_bounds(&cli.out.join("bounds.csv"), &rows)?;
        }
        Command::Instability {
            system,
            t,
            restarts,
            seed,
        } => {
            let sys = read_json::<SystemFile>(&system)?.to_system()?;
            let est = estimate_instability(sys.a(), t, restarts, seed)?;
            output::write_json(&cli.out.join("instability.json"), &InstabilityJson::from(&est))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DGRKIT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
