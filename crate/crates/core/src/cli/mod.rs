//! Command-line front end: pricing tables, settlement-date sweeps and the
//! oracle validation suites.

mod report;
mod tables;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::termstructure::{load_config, Config, ContractKind};
use crate::Error;

pub use report::{Check, Report};
pub use tables::{price_rows, sweep_rows, write_price_csv, write_sweep_csv, PriceRow, SweepRow, SweepSpec};
pub use validate::{closedform_suite, greens_suite, mc_suite};

#[derive(Debug, Parser)]
#[command(
    name = "sofrfut",
    version,
    about = "SOFR and Eurodollar futures convexity under an extended Hull-White model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price the configured contracts at y = 0, t = 0.
    Price {
        #[arg(long)]
        config: PathBuf,
        /// Index into the config's contract list; all contracts if omitted.
        #[arg(long)]
        contract: Option<usize>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convexity against the Hull-White baseline over a range of settlement dates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kind: ContractKind,
        #[arg(long)]
        t1_start: f64,
        #[arg(long)]
        t1_end: f64,
        #[arg(long)]
        t1_step: f64,
        /// Accrual length in years, e.g. 0.25 or 0.0833333333333333.
        #[arg(long)]
        tenor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed forms against Monte Carlo.
    McValidate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        paths: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Time step in years.
        #[arg(long, default_value_t = 1.0 / 365.0)]
        step: f64,
        #[arg(long)]
        antithetic: bool,
        #[command(flatten)]
        tol: Tolerance,
    },
    /// Closed forms against Green's-function convolution.
    GreensValidate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Half-width of the integration box in standard deviations.
        #[arg(long = "box", default_value_t = 10.0)]
        box_sd: f64,
        #[command(flatten)]
        tol: Tolerance,
    },
    /// Kernel closed forms, calibration identity and Hull-White reduction.
    ClosedformValidate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        tol: Tolerance,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct Tolerance {
    /// Multiplies every tolerance; values below 1 tighten the checks.
    #[arg(long, default_value_t = 1.0)]
    pub tolerance_scale: f64,
}

/// Reasons a command ends unsuccessfully.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{failed} of {total} checks failed")]
    Validation { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Config(_) | CliError::Csv(_) => 2,
        }
    }
}

fn load(path: &PathBuf) -> Result<Config, CliError> {
    load_config(path).map_err(|e| match e {
        Error::Io(io) => Error::InvalidParam(format!("config {}: {io}", path.display())).into(),
        other => other.into(),
    })
}

fn finish(report: Report) -> Result<(), CliError> {
    print!("{report}");
    match report.failures() {
        0 => Ok(()),
        failed => Err(CliError::Validation {
            failed,
            total: report.checks.len(),
        }),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Price {
            config,
            contract,
            out,
        } => {
            let cfg = load(&config)?;
            let rows = price_rows(&cfg, contract)?;
            let mut stdout = std::io::stdout().lock();
            write_price_csv(&mut stdout, &rows)?;
            if let Some(path) = out {
                write_price_csv(std::fs::File::create(path).map_err(Error::from)?, &rows)?;
            }
            Ok(())
        }
        Command::Sweep {
            config,
            kind,
            t1_start,
            t1_end,
            t1_step,
            tenor,
            out,
        } => {
            let cfg = load(&config)?;
            let spec = SweepSpec {
                kind,
                t1_start,
                t1_end,
                t1_step,
                tenor,
            };
            let rows = sweep_rows(&cfg, &spec)?;
            write_sweep_csv(std::fs::File::create(out).map_err(Error::from)?, kind, &rows)?;
            Ok(())
        }
        Command::McValidate {
            config,
            paths,
            seed,
            step,
            antithetic,
            tol,
        } => {
            let cfg = load(&config)?;
            let sim = crate::mc::SimConfig {
                n_paths: paths,
                step,
                seed,
                antithetic,
            };
            finish(mc_suite(&cfg, &sim, tol.tolerance_scale)?)
        }
        Command::GreensValidate {
            config,
            grid,
            box_sd,
            tol,
        } => {
            let cfg = load(&config)?;
            let grid = crate::greens::PayoffGrid { box_sd, nodes: grid };
            finish(greens_suite(&cfg, &grid, tol.tolerance_scale)?)
        }
        Command::ClosedformValidate { config, tol } => {
            let cfg = load(&config)?;
            finish(closedform_suite(&cfg, tol.tolerance_scale)?)
        }
    }
}

/// Parses the process arguments, runs the command and maps the outcome to
/// an exit code: 0 success, 1 validation failure, 2 configuration error.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
