//! Command-line flags.

use std::path::PathBuf;

use bnmf::experiments::{ArdMode, ExperimentKind};
use bnmf::{Engine, InitStrategy, Model};
use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};

use crate::krange::{parse_k_list, KRangeError};

/// Parsed dimensionality list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KList(pub Vec<usize>);

fn k_list(s: &str) -> Result<KList, KRangeError> {
    parse_k_list(s).map(KList)
}

fn choice<T>(names: &'static [&'static str]) -> impl TypedValueParser<Value = T>
where
    T: std::str::FromStr + Clone + Send + Sync + 'static,
    T::Err: std::fmt::Debug,
{
    PossibleValuesParser::new(names).map(|s| s.parse::<T>().expect("listed value parses"))
}

fn model_parser() -> impl TypedValueParser<Value = Model> {
    choice(&["nmf", "nmtf"])
}

fn engine_parser() -> impl TypedValueParser<Value = Engine> {
    choice(&["np", "gibbs", "icm", "vb"])
}

fn init_parser() -> impl TypedValueParser<Value = InitStrategy> {
    choice(&["random", "prior-mean", "kmeans"])
}

fn ard_mode_parser() -> impl TypedValueParser<Value = ArdMode> {
    choice(&["on", "off", "both"])
}

fn kind_parser() -> impl TypedValueParser<Value = ExperimentKind> {
    choice(&["convergence", "noise", "sparsity", "cv", "model-select"])
}

#[derive(Debug, Parser)]
#[command(
    name = "bnmf",
    version,
    about = "Bayesian nonnegative matrix (tri-)factorisation",
    propagate_version = true
)]
pub struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with defaults for any flag.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Fit one model to a CSV matrix.
    Fit(FitArgs),
    /// Reconstruct the full matrix from a saved state.
    Predict(PredictArgs),
    /// Run one of the benchmark protocols.
    Experiment(ExperimentArgs),
    /// Write a synthetic data set.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = model_parser())]
    pub model: Option<Model>,
    /// Dimensionality K (rows of the tri-factorisation).
    #[arg(long)]
    pub k: Option<usize>,
    /// Column dimensionality L of the tri-factorisation.
    #[arg(long)]
    pub l: Option<usize>,
    /// Rate of the exponential prior on factor entries.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha_tau: Option<f64>,
    #[arg(long)]
    pub beta_tau: Option<f64>,
    /// Shape of the Gamma hyperprior on ARD rates.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Rate of the Gamma hyperprior on ARD rates.
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long, value_parser = init_parser())]
    pub init: Option<InitStrategy>,
    /// Sweeps to run (engine default when absent).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Discarded sweeps for Gibbs and ICM (default: half the iterations).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Keep every n-th sweep after burn-in for Gibbs and ICM.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Relative training-MSE change that stops NP and VB early.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Numeric CSV matrix; cells equal to the missing token are unobserved.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Token marking an unobserved cell (default: empty cell).
    #[arg(long)]
    pub missing: Option<String>,
    /// The first CSV record is a header.
    #[arg(long)]
    pub header: bool,
    /// Exponentiate observed values before anything else.
    #[arg(long)]
    pub undo_log: bool,
    /// Cap observed values at this level.
    #[arg(long)]
    pub cap: Option<f64>,
    /// Drop rows with fewer observed cells than this.
    #[arg(long, value_name = "N")]
    pub min_row_observations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OutputArgs {
    /// Directory for output files [default: $BNMF_OUTPUT_DIR, else bnmf-out].
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = engine_parser())]
    pub engine: Option<Engine>,
    /// Shared per-factor rates with a Gamma hyperprior.
    #[arg(long)]
    pub ard: bool,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// State file written by `fit`.
    #[arg(long, value_name = "PATH")]
    pub state: PathBuf,
    /// Matrix the model was fitted to; its unobserved cells are scored.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Matrix of true values to score the prediction against.
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub missing: Option<String>,
    #[arg(long)]
    pub header: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Rank of the generated truth.
    #[arg(long)]
    pub true_k: Option<usize>,
    /// Column rank of a tri-factor truth.
    #[arg(long)]
    pub true_l: Option<usize>,
    /// Rate of the exponential distribution of generated factors.
    #[arg(long)]
    pub factor_rate: Option<f64>,
    /// Variance of the added Gaussian noise.
    #[arg(long, conflicts_with = "nsr")]
    pub noise_variance: Option<f64>,
    /// Noise standard deviation relative to that of the truth.
    #[arg(long)]
    pub nsr: Option<f64>,
    /// Seed of the generated data (default: --seed).
    #[arg(long)]
    pub synthetic_seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(value_parser = kind_parser())]
    pub kind: ExperimentKind,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated engines to compare.
    #[arg(long, value_delimiter = ',', value_parser = engine_parser())]
    pub engines: Option<Vec<Engine>>,
    #[arg(long, value_parser = ard_mode_parser())]
    pub ard: Option<ArdMode>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Convergence: fits per engine.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Noise: comma-separated noise-to-signal ratios.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Noise and sparsity: random splits per setting.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Noise: fraction of cells held out.
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Sparsity: comma-separated held-out fractions.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Cv and model-select: dimensionalities, e.g. `1..10` or `2,4,8`.
    #[arg(long, value_parser = k_list)]
    pub k_values: Option<KList>,
    /// Cv (outer) and model-select folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Cv: inner folds of the dimensionality search.
    #[arg(long)]
    pub inner_folds: Option<usize>,
    /// Cv: dimensionality of ARD runs.
    #[arg(long)]
    pub ard_k: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_parser = model_parser())]
    pub model: Option<Model>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
