use std::process::ExitCode;

use clap::{Parser, Subcommand};
use krrimpute_cli::{commands, EstimateArgs, SimulateArgs, WeightsArgs};

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the outcome mean from a CSV file with missing outcomes
    Estimate(EstimateArgs),
    /// Run a seeded Monte Carlo study of the estimators
    Simulate(SimulateArgs),
    /// Export fitted propensity weights per input row
    Weights(WeightsArgs),
}

#[derive(Debug, Parser)]
#[command(
    name = "krrimpute",
    version,
    about = "Mean estimation under missing-at-random outcomes: kernel ridge regression imputation and maximum-entropy propensity weighting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => commands::cmd_estimate(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Weights(args) => commands::cmd_weights(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
