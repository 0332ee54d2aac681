//! Library surface of the command-line tool, split out so integration tests
//! can drive ingestion and the subcommands directly.

pub mod commands;
pub mod config;
pub mod ingest;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

/// Exit code policy: 0 success, 2 input error, 3 numerical failure.
#[derive(Debug)]
pub struct CliError {
    numerical: bool,
    message: String,
}

impl CliError {
    pub fn input(message: String) -> Self {
        Self { numerical: false, message }
    }

    pub fn numerical(message: String) -> Self {
        Self { numerical: true, message }
    }

    pub fn exit_code(&self) -> u8 {
        if self.numerical {
            3
        } else {
            2
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<krrimpute::Error> for CliError {
    fn from(e: krrimpute::Error) -> Self {
        CliError::numerical(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Sobolev2,
    Sobolev1,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenominatorChoice {
    Linear,
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Complete,
    LinearIm,
    KrrIm,
    KrrPs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    A,
    B,
    C,
}

/// Flags shared by every subcommand that fits models.
#[derive(Debug, Args, Clone, Default)]
pub struct FitFlags {
    /// Kernel family (sobolev2, sobolev1, gaussian)
    #[arg(long)]
    pub kernel: Option<KernelChoice>,
    /// Gaussian bandwidth: a positive number or "median"
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Ridge penalty: "auto" (GCV grid search) or a positive number
    #[arg(long)]
    pub lambda: Option<String>,
    /// Density-ratio penalty: "auto" (calibration grid search) or a number
    #[arg(long)]
    pub tau: Option<String>,
    /// GCV denominator convention
    #[arg(long, value_name = "FORM")]
    pub gcv_denominator: Option<DenominatorChoice>,
    /// Restrict the lambda grid to lambda <= n^(-kappa), kappa > 1
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct EstimateArgs {
    /// Input CSV file with a header row
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Name of the outcome column
    #[arg(long)]
    pub outcome_col: Option<String>,
    /// Comma-separated covariate column names (default: all other columns)
    #[arg(long, value_delimiter = ',')]
    pub covariate_cols: Option<Vec<String>>,
    /// Optional 0/1 response-indicator column (default: infer from missing outcomes)
    #[arg(long)]
    pub response_col: Option<String>,
    /// Confidence level in (0, 1)
    #[arg(long)]
    pub level: Option<f64>,
    /// Seed recorded in the report (estimation itself is deterministic)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimators to report (complete, linear-im, krr-im, krr-ps)
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<MethodChoice>>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Key = value file supplying defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for report.json
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    /// Outcome model (A, B, C)
    #[arg(long)]
    pub model: Option<ModelChoice>,
    /// Response mechanism (1 or 2)
    #[arg(long)]
    pub mechanism: Option<u8>,
    /// Sample size per replicate
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of Monte Carlo replicates
    #[arg(long = "B", visible_alias = "replicates")]
    pub replicates: Option<usize>,
    /// Base seed; replicate r uses base_seed + r
    #[arg(long)]
    pub seed: Option<u64>,
    /// Estimators to include (krr-im, krr-ps, linear-im)
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<MethodChoice>>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Key = value file supplying defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for summary.json and replicates.csv
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct WeightsArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub outcome_col: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub covariate_cols: Option<Vec<String>>,
    #[arg(long)]
    pub response_col: Option<String>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for weights.csv
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}
