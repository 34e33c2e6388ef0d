use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "csviu", version, about = "Stability, Lyapunov and energy-norm analysis with Monte Carlo checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stability verdicts and a detectability witness.
    Analyze(AnalyzeArgs),
    /// Closed-form norms at one α, at α = 1, or over a sweep.
    Norm(NormArgs),
    /// Monte Carlo estimates with closed-form comparators.
    Simulate(SimulateArgs),
    /// Vanishing-discount table (same as `norm --sweep`).
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Model JSON file.
    pub model: PathBuf,
    /// Weight matrix Q as a JSON array of rows (default CᵀC).
    #[arg(long = "Q", alias = "q", value_name = "FILE")]
    pub q: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub alpha: f64,
    /// Analysis configuration JSON; its alpha and Q replace the flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output-injection gain G (n×p, JSON rows) to test instead of searching.
    #[arg(long = "G", alias = "g", value_name = "FILE")]
    pub g: Option<PathBuf>,
    /// Random candidates tried by the witness search.
    #[arg(long, default_value_t = 200)]
    pub budget: usize,
    /// Seed of the witness search.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Args)]
#[group(id = "mode", required = true, multiple = false)]
pub struct NormMode {
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Long-run power norm (α = 1).
    #[arg(long)]
    pub power: bool,
    /// Comma-separated α list.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub sweep: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct NormArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub mode: NormMode,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated α list (default grid when omitted).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Noise {
    Gaussian,
    Rademacher,
    Uniform,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub paths: usize,
    #[arg(long)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Discount of the Abel estimate.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.9)]
    pub alpha: f64,
    /// Initial state, comma-separated (default zero).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Noise::Gaussian)]
    pub noise: Noise,
    /// Constant exogenous input ℓ, comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub input: Option<Vec<f64>>,
    /// Also sample both sides of the finite-horizon energy representation.
    #[arg(long)]
    pub validate_representation: bool,
    /// Also compare per-stage energies with the geometric decay envelope.
    #[arg(long)]
    pub check_decay: bool,
    /// Write every trajectory to this CSV file.
    #[arg(long, value_name = "FILE")]
    pub dump: Option<PathBuf>,
    /// Worker threads (default: all cores). CSVIU_THREADS takes precedence.
    #[arg(long)]
    pub threads: Option<usize>,
}
