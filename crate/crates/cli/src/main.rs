//! `cpflow`: batch front-end for the Orr–Sommerfeld, channel and stability
//! solvers. Exit status 2 signals a configuration error, 3 a solver error and
//! 4 a regression against a stored baseline.

mod commands;
mod config;
mod expr;
mod output;
mod regression;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::{Format, Settings};
use crate::output::Sink;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(cpflow::Error),
    Regression(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Regression(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration: {m}"),
            CliError::Solver(e) => write!(f, "solver: {e}"),
            CliError::Regression(m) => write!(f, "regression: {m}"),
        }
    }
}

impl From<cpflow::Error> for CliError {
    fn from(e: cpflow::Error) -> Self {
        CliError::Solver(e)
    }
}

#[derive(Parser)]
#[command(name = "cpflow", version, about = "Perturbation solvers around Couette-Poiseuille channel flow")]
#[command(after_help = "Results go to --output, else $CPFLOW_OUTPUT_DIR/<command>.<format>, else stdout.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one forced Orr–Sommerfeld mode and report the a priori ratios.
    SolveMode,
    /// Solve the linearized channel problem for a periodic body force.
    SolveLinear,
    /// Picard iteration for the full perturbation problem.
    SolveNonlinear,
    /// Eigenvalues of the homogeneous mode equation at (A, T).
    Spectrum,
    /// Locate the first crossing of the leading eigenvalue.
    NeutralSearch,
    /// Run the estimate, contraction and uniqueness checks for a profile.
    VerifyEstimates,
    /// Check the parity cancellations and symmetric iterates.
    SymmetryCheck,
    /// Compare measured constants with a stored baseline.
    Regression {
        #[arg(long)]
        baseline: PathBuf,
        /// Write the baseline instead of comparing.
        #[arg(long)]
        record: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveMode => "solve-mode",
            Command::SolveLinear => "solve-linear",
            Command::SolveNonlinear => "solve-nonlinear",
            Command::Spectrum => "spectrum",
            Command::NeutralSearch => "neutral-search",
            Command::VerifyEstimates => "verify-estimates",
            Command::SymmetryCheck => "symmetry-check",
            Command::Regression { .. } => "regression",
        }
    }

    fn has_csv(&self) -> bool {
        matches!(
            self,
            Command::SolveMode | Command::SolveLinear | Command::SolveNonlinear | Command::Spectrum
        )
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.settings.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let mut settings = cli.settings.clone().over(file);
    settings.config = None;
    settings.check()?;
    let format = *settings.format.get_or_insert(Format::Json);
    let name = cli.command.name();
    if format == Format::Csv && !cli.command.has_csv() {
        return Err(CliError::Config(format!("{name} writes JSON only")));
    }
    let sink = Sink::resolve(&settings, name, format);
    sink.check()?;
    if let Command::Regression { baseline, record: true } = &cli.command {
        Sink::File(baseline.clone()).check()?;
    }
    if let Some(t) = settings.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }

    let started = Instant::now();
    let mut regressed = false;
    let report = match &cli.command {
        Command::SolveMode => commands::solve_mode(&mut settings)?,
        Command::SolveLinear => commands::solve_linear(&mut settings)?,
        Command::SolveNonlinear => commands::solve_nonlinear(&mut settings)?,
        Command::Spectrum => commands::spectrum(&mut settings)?,
        Command::NeutralSearch => commands::neutral(&mut settings)?,
        Command::VerifyEstimates => commands::verify_estimates(&mut settings)?,
        Command::SymmetryCheck => commands::symmetry_check(&mut settings)?,
        Command::Regression { baseline, record } => {
            let (report, pass) = regression::run(&mut settings, baseline, *record)?;
            regressed = !pass;
            report
        }
    };
    output::emit(&sink, format, name, &settings, &report, started)?;
    if regressed {
        return Err(CliError::Regression("measured constants left their tolerances".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
