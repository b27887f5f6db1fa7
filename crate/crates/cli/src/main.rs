//! `psdc`: parallel SDC preconditioners from the command line.

mod args;
mod commands;
mod error;
mod output;
mod reproduce;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::args::OutputArgs;
use crate::commands::{
    coeffs, convergence, cost_cmd, integrate_cmd, nodes, optimize, stability, CoeffsArgs, ConvergenceArgs, CostArgs,
    IntegrateArgs, NodesArgs, OptimizeArgs, StabilityArgs,
};
use crate::error::CliError;
use crate::output::{emit, Report};
use crate::reproduce::{reproduce, ReproduceArgs};

#[derive(Debug, Parser)]
#[command(name = "psdc", version, about = "Diagonal SDC preconditioners: coefficients, sweeps and benchmarks")]
struct Cli {
    /// Threads for diagonal sweeps: 1 or M.
    #[arg(long, global = true, env = "PSDC_WORKERS", default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Collocation nodes, weights and Q.
    Nodes(NodesArgs),
    /// Preconditioner matrix and its spectral radii.
    Coeffs(CoeffsArgs),
    /// Optimise MIN-SR-S coefficients, with an optional cache.
    Optimize(OptimizeArgs),
    /// Integrate a problem and print the trajectory.
    Integrate(IntegrateArgs),
    /// Stability function on a grid, or an A-stability check.
    Stability(StabilityArgs),
    /// Error and cost over a list of step counts.
    Convergence(ConvergenceArgs),
    /// Modelled cost from work counters.
    Cost(CostArgs),
    /// Regenerate a benchmark dataset.
    Reproduce(ReproduceArgs),
}

fn finish(report: Report, output: &OutputArgs) -> Result<(), CliError> {
    emit(output.path(), &report.render(output.format()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    let workers = cli.workers;
    match &cli.command {
        Command::Nodes(a) => finish(nodes(a)?, &a.output),
        Command::Coeffs(a) => finish(coeffs(a)?, &a.output),
        Command::Optimize(a) => finish(optimize(a)?, &a.output),
        Command::Integrate(a) => finish(integrate_cmd(a, workers)?, &a.output),
        Command::Stability(a) => finish(stability(a)?, &a.output),
        Command::Convergence(a) => finish(convergence(a, workers)?, &a.output),
        Command::Cost(a) => {
            let (value, report) = cost_cmd(a)?;
            if a.output.requested() {
                finish(report, &a.output)
            } else {
                emit(None, &format!("{value}\n"))
            }
        }
        Command::Reproduce(a) => {
            let files = reproduce(a, workers)?;
            let listing: String = files
                .files
                .iter()
                .map(|(path, sha)| format!("{sha}  {}\n", path.display()))
                .collect();
            emit(None, &listing)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psdc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
