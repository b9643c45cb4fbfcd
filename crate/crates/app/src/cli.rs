use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{AppError, AppResult};
use crate::verify::Suite;

#[derive(Debug, Parser)]
#[command(name = "anideg-ch", version, about = "Anisotropic Cahn-Hilliard simulator with degenerate mobility on a flat torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write diagnostics, snapshots and a manifest.
    Run {
        /// Run configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] directory`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Repeat the configured run for several regularization parameters and
    /// fit the decay of the excess over [-1, 1].
    Continuation {
        /// Run configuration file; its `delta` is ignored.
        #[arg(long)]
        config: PathBuf,
        /// Strictly decreasing comma-separated list, e.g. 0.2,0.1,0.05.
        #[arg(long, value_delimiter = ',', required = true)]
        deltas: Vec<f64>,
        /// Maximum number of concurrent runs.
        #[arg(long, env = "ANIDEG_THREADS")]
        threads: Option<usize>,
        /// Output directory; overrides `[output] directory`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run property suites on built-in fixtures.
    Verify {
        /// Suite to run.
        #[arg(long, value_enum)]
        suite: Suite,
        /// Add an indefinite quadratic anisotropy that must fail certification.
        #[arg(long)]
        inject_failure: bool,
        /// Also write the table as CSV to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write plain-text plot data for a run directory.
    PlotData {
        /// Directory produced by `run`.
        #[arg(long)]
        run: PathBuf,
    },
}

pub fn execute(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Run { config, output } => crate::run::cmd_run(&config, output.as_deref()).map(|_| ()),
        Command::Continuation {
            config,
            deltas,
            threads,
            output,
        } => crate::run::cmd_continuation(&config, &deltas, threads, output.as_deref()).map(|_| ()),
        Command::Verify {
            suite,
            inject_failure,
            report,
        } => crate::verify::cmd_verify(suite, inject_failure, report.as_deref()).map(|_| ()),
        Command::PlotData { run } => {
            for p in crate::plot::emit_plot_data(&run)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

/// The single stderr line for a failed command.
pub fn error_line(e: &AppError) -> String {
    format!("{}: {}", e.class(), e).replace('\n', " ")
}
