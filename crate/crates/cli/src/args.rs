use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nb2_core::fisher::InfoKind;

#[derive(Debug, Parser)]
#[command(name = "nb2", version, about = "NB2 negative binomial regression by maximum likelihood")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit (β, θ) to a CSV dataset.
    Fit(FitArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Run the identity checks and numerical sweeps.
    Verify(VerifyArgs),
    /// Observed and/or expected information at given parameters.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InfoChoice {
    Observed,
    Expected,
    Both,
}

impl InfoChoice {
    pub fn kinds(self) -> Vec<InfoKind> {
        match self {
            InfoChoice::Observed => vec![InfoKind::Observed],
            InfoChoice::Expected => vec![InfoKind::Expected],
            InfoChoice::Both => vec![InfoKind::Observed, InfoKind::Expected],
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the count column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Do not prepend an intercept column.
    #[arg(long)]
    pub no_intercept: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Information used for standard errors.
    #[arg(long, value_enum, default_value = "observed")]
    pub info: FitInfo,
    /// Bound on the neglected tail of truncated infinite sums.
    #[arg(long, default_value = "1e-12")]
    pub eps_tail: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitInfo {
    Observed,
    Expected,
}

impl From<FitInfo> for InfoKind {
    fn from(v: FitInfo) -> Self {
        match v {
            FitInfo::Observed => InfoKind::Observed,
            FitInfo::Expected => InfoKind::Expected,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Coefficients, intercept first, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub beta: Vec<f64>,
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub out: OutputArgs,
    /// Grid override `counts/params`, e.g. `0,1,2/0.5,1`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub tol_exact: Option<f64>,
    #[arg(long)]
    pub tol_first: Option<f64>,
    #[arg(long)]
    pub tol_second: Option<f64>,
    /// Bound on the neglected tail of truncated infinite sums.
    #[arg(long, default_value = "1e-12")]
    pub eps_tail: f64,
    /// Seed for the random derivative instances.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub beta: Vec<f64>,
    #[arg(long)]
    pub theta: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub info: InfoChoice,
    /// Bound on the neglected tail of truncated infinite sums.
    #[arg(long, default_value = "1e-12")]
    pub eps_tail: f64,
}
