//! `ising-clt`: batch front end for the exact, Monte Carlo and bound tools.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical failure. The worker
//! count comes from `ISING_CLT_THREADS` (default 1); outputs do not depend on it.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::output::Format;

pub const THREADS_ENV: &str = "ISING_CLT_THREADS";

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "ising-clt",
    version,
    about = "Gaussian approximation of Ising model projections"
)]
pub struct Cli {
    /// Model file (JSON with n, A, h and an optional label)
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Inline model document, same layout as a model file
    #[arg(long, global = true)]
    pub model_json: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output path (stdout when absent)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact moments and, optionally, the law of θᵀX
    ExactStats(ExactStatsArgs),
    /// Extremal eigenvalues and the high-temperature margin
    Spectral(SpectralArgs),
    /// Dobrushin row sums and interdependence bounds
    Dobrushin,
    /// Field supremum, ε optimization and the error bound
    Bound(BoundArgs),
    /// 2-Wasserstein distances to a normal law
    W2(W2Args),
    /// Exact or Glauber samples
    Sample(SampleArgs),
    /// Monotone coupled pair, drift table and stationary disagreement
    Couple(CoupleArgs),
    /// Derivative identity and variance identity along the interpolant
    Embed(EmbedArgs),
    /// Correlation decay on a finite-range lattice
    LatticeDecay(LatticeDecayArgs),
    /// W₂ to the normal approximation across a family of models
    CltTable(CltTableArgs),
    /// Write a model file
    MakeModel(MakeModelArgs),
    /// Run a command described by a JSON config document
    Run(RunArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExactStatsArgs {
    /// Direction θ (normalized); uniform when absent
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    /// Also print the atoms of θᵀX
    #[arg(long)]
    pub pmf: bool,
    #[arg(long, default_value_t = ising_clt::exact::DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectralArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    UniformScan,
    Grid,
    Multistart,
    Product,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::UniformScan)]
    pub strategy: StrategyArg,
    /// JSON list of fields for the grid strategy
    #[arg(long)]
    pub grid_file: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    /// Fixed ε; optimized when absent
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Poincaré constant override
    #[arg(long)]
    pub cp: Option<f64>,
    /// Also report the exact W₂ of θᵀX to its normal approximation
    #[arg(long)]
    pub exact_w2: bool,
    /// Tabulate the bound on this many evenly spaced ε in (0, ½)
    #[arg(long, default_value_t = 0)]
    pub epsilon_grid: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct W2Args {
    /// Fair ±1 coin against N(0, 1)
    #[arg(long)]
    pub coin: bool,
    /// Two normals as mean1,sd1,mean2,sd2
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub normals: Vec<f64>,
    /// File of sample values, one per line
    #[arg(long)]
    pub samples: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub ref_mean: Option<f64>,
    #[arg(long)]
    pub ref_sd: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    Exact,
    Glauber,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SampleMethod::Exact)]
    pub method: SampleMethod,
    /// Glauber updates between recorded states (default: one sweep)
    #[arg(long)]
    pub thin: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub burn_sweeps: u64,
    /// Pins as site:spin, e.g. 0:+1,3:-1
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pins: Vec<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleArgs {
    /// Site held at +1 in the upper chain and -1 in the lower chain
    #[arg(long, default_value_t = 0)]
    pub site: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 10_000)]
    pub burn_in: u64,
    #[arg(long, default_value_t = 1)]
    pub record_every: u64,
    /// Further sites held oppositely in the two chains
    #[arg(long, value_delimiter = ',')]
    pub extra_pins: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    /// Prefix for `<prefix>_series.csv` and `<prefix>_transitions.csv` of replica 0
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long, default_value_t = 0.4)]
    pub t: f64,
    /// Point y_t; drawn from the interpolant when absent
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub y: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub i: usize,
    #[arg(long, default_value_t = 0)]
    pub l: usize,
    #[arg(long, default_value_t = 0)]
    pub k: usize,
    #[arg(long, default_value_t = ising_clt::embedding::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    pub nodes: usize,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub t_max: f64,
    #[arg(long)]
    pub skip_variance: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Exact,
    Mcmc,
}

#[derive(Debug, Args, Serialize)]
pub struct LatticeDecayArgs {
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub sides: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub range: usize,
    /// Coupling per Chebyshev distance 1..=range
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "0.2"
    )]
    pub coupling: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub field: f64,
    #[arg(long)]
    pub periodic: bool,
    #[arg(long, default_value_t = 0)]
    pub origin: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Exact)]
    pub estimator: EstimatorArg,
    #[arg(long, default_value_t = 2_000_000)]
    pub steps: u64,
    #[arg(long, default_value_t = 20_000)]
    pub burn_in: u64,
    #[arg(long, default_value_t = 1)]
    pub record_every: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Chain,
    Product,
    Dobrushin,
}

#[derive(Debug, Args, Serialize)]
pub struct CltTableArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Chain)]
    pub family: FamilyArg,
    #[arg(long, value_delimiter = ',', default_value = "8,12,16,20")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub cycles: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub field: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Exact)]
    pub estimator: EstimatorArg,
    /// Independent chains per model (MCMC)
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    /// Recorded sweeps per chain (MCMC)
    #[arg(long, default_value_t = 20_000)]
    pub sweeps: u64,
    #[arg(long, default_value_t = 1_000)]
    pub burn_sweeps: u64,
    #[arg(long)]
    pub with_bound: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Random,
    Product,
    Chain,
    Box,
    Dobrushin,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Random)]
    pub kind: ModelKind,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Coupling scale (random), β (chain, box)
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    pub coupling: f64,
    /// Field scale (random, dobrushin) or constant field (product, chain, box)
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub field: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,4")]
    pub sides: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub range: usize,
    #[arg(long)]
    pub periodic: bool,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub cycles: usize,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// JSON document: {"command": "...", "args": {...}} plus optional global keys
    #[arg(long)]
    pub config: PathBuf,
}

fn configure_threads() -> Result<(), String> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?,
        Err(_) => 1,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match commands::execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
