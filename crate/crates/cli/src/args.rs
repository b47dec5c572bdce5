//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use randadj::estimators::{ImputePolicy, Model, MpFallback, Strategy};
use randadj::ols::CovFlavor;
use randadj::rng::DEFAULT_SEED;
use randadj::Scenario;

#[derive(Debug, Parser)]
#[command(name = "randadj", version, about = "Covariate adjustment with missing covariates in randomized experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the average treatment effect with one strategy.
    Analyze(AnalyzeArgs),
    /// Tabulate every strategy under both regression models.
    Compare(CompareArgs),
    /// Run a Monte Carlo study on a built-in scenario.
    Simulate(SimulateArgs),
    /// Studentized randomization test of the sharp null of no effect.
    Frt(FrtArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClusterLevel {
    Unit,
    Total,
}

/// Input file and column roles.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row; empty, NA or nan cells are missing.
    pub input: PathBuf,
    #[arg(long, default_value = "y")]
    pub outcome: String,
    #[arg(long, default_value = "z")]
    pub treatment: String,
    /// Comma-separated covariate columns, or `rest` for every unassigned column.
    #[arg(long, default_value = "rest")]
    pub covariates: String,
    /// Cluster label column (integer labels).
    #[arg(long)]
    pub cluster: Option<String>,
    /// Stratum label column (integer labels).
    #[arg(long)]
    pub stratum: Option<String>,
}

/// Options shared by every estimator.
#[derive(Debug, Args)]
pub struct CommonSpecArgs {
    /// Imputation constants: zeros, means, debias, or a comma list.
    #[arg(long = "impute-const", default_value = "zeros")]
    pub impute: ImputePolicy,
    /// Robust covariance flavor: hc0, hc1 or cr0.
    #[arg(long = "hc", default_value = "hc0")]
    pub flavor: CovFlavor,
    /// Policy for undersized missingness patterns: error, neyman or mim.
    #[arg(long = "mp-fallback", default_value = "neyman")]
    pub mp_fallback: MpFallback,
    /// Confidence level of the Wald interval.
    #[arg(long, default_value_t = 0.95)]
    pub ci: f64,
    /// Analysis level under cluster randomization.
    #[arg(long = "cluster-level", value_enum)]
    pub cluster_level: Option<ClusterLevel>,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// neyman, cc, ccov, imp, mim, mp, mp_aggregate, mc, cim or mim2.
    #[arg(long, default_value = "mim")]
    pub strategy: Strategy,
    /// F (additive) or L (fully interacted).
    #[arg(long, default_value = "L")]
    pub model: Model,
    #[command(flatten)]
    pub common: CommonSpecArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Also run a studentized randomization test with this many draws.
    #[arg(long = "frt-draws")]
    pub frt_draws: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Write the result as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonSpecArgs,
    /// Write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario i, ii or iii.
    #[arg(long)]
    pub scenario: Scenario,
    /// Population size; the scenario default when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Comma-separated strategies; the difference in means is always included.
    #[arg(long, default_value = "cc,ccov,imp,mim,mp")]
    pub strategies: String,
    /// Comma-separated models.
    #[arg(long, default_value = "F,L")]
    pub models: String,
    #[command(flatten)]
    pub common: CommonSpecArgs,
    /// Directory receiving summary.csv and replicates.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FrtArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long = "frt-draws", default_value_t = 1000)]
    pub frt_draws: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}
