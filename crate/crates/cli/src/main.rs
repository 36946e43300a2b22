//! `adass`: fit, estimate, simulate, diagnose, experiment, align.
//!
//! Exit codes: 0 success; 1 numerical failure during estimation; 2 bad
//! input (arguments, files, dimensions).

mod config;
mod manifest;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use adass_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "adass",
    version,
    about = "Adaptive spike-and-slab sparse factor models: sampler, rank estimators, experiments"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Worker threads for replicated runs (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Bit-identical re-runs: forces a single worker thread.
    #[arg(long, global = true)]
    pub strict: bool,
}

impl GlobalArgs {
    pub fn effective_threads(&self) -> usize {
        if self.strict {
            1
        } else {
            self.threads
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Gibbs sampler on a CSV dataset and write trace/summary files.
    Fit(FitArgs),
    /// Run eigenvalue-based rank estimators on a CSV dataset.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Autocorrelation diagnostics and summaries for a scalar trace.
    Diagnose(DiagnoseArgs),
    /// Run a replicated study grid from a JSON description.
    Experiment(ExperimentArgs),
    /// Align loading snapshots into a consensus matrix.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Input data CSV, rows = observations (optional header auto-detected).
    pub data: PathBuf,

    /// Flat key=value config file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Factor-column budget (default: ceil(sqrt(n)), clamped below p).
    #[arg(long)]
    pub q: Option<usize>,

    /// Sparsity penalty exponent (default 0.1).
    #[arg(short = 'A', long)]
    pub sparsity_exponent: Option<f64>,

    /// Inverse-gamma noise prior shape (default 0.01).
    #[arg(long)]
    pub noise_shape: Option<f64>,

    /// Inverse-gamma noise prior scale (default 0.01).
    #[arg(long)]
    pub noise_scale: Option<f64>,

    /// One noise variance per variable instead of a shared one.
    #[arg(long)]
    pub per_variable_noise: bool,

    /// Inverse-Wishart prior on the factor covariance instead of identity.
    #[arg(long)]
    pub correlated_factors: bool,

    /// Inverse-Wishart degrees of freedom (default q + 2).
    #[arg(long)]
    pub iw_dof: Option<f64>,

    /// Total sweeps (default 3000).
    #[arg(long)]
    pub iters: Option<usize>,

    /// Burn-in sweeps discarded from summaries (default 500).
    #[arg(long)]
    pub burn_in: Option<usize>,

    /// Keep every thin-th post-burn-in sweep (default 5).
    #[arg(long)]
    pub thin: Option<usize>,

    /// Record the loading matrix at every retained sweep.
    #[arg(long)]
    pub snapshots: bool,

    /// Subtract column means before fitting.
    #[arg(long)]
    pub center: bool,

    #[arg(long)]
    pub seed: Option<u64>,

    /// RNG sub-stream (parallel runs on one seed use distinct streams).
    #[arg(long)]
    pub stream: Option<u64>,

    /// Output directory for trace.csv, summary.json, sigma_mean.sftr,
    /// snapshots/, manifest.json.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input data CSV, rows = observations.
    pub data: PathBuf,

    /// Comma-separated subset of et,er,gr,act,dt (default: all).
    #[arg(long)]
    pub methods: Option<String>,

    /// Candidate-rank cap (default 10).
    #[arg(long, default_value_t = 10)]
    pub r_max: usize,

    /// Subtract column means before forming the covariance.
    #[arg(long)]
    pub center: bool,

    /// Seed for the randomized estimator.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0)]
    pub stream: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// signed_two, uniform_band, or diagonal_pattern.
    #[arg(long)]
    pub design: String,

    /// Observations to draw.
    #[arg(long)]
    pub n: usize,

    /// Observed dimension (not for the fixed diagonal pattern).
    #[arg(long)]
    pub p: Option<usize>,

    /// Active rows (not for the fixed diagonal pattern).
    #[arg(long)]
    pub s: Option<usize>,

    /// True factor count (not for the fixed diagonal pattern).
    #[arg(long)]
    pub r: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, default_value_t = 0)]
    pub stream: u64,

    /// Output CSV path; the truth sidecar lands next to it.
    #[arg(long, default_value = "data.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Scalar trace CSV written by `fit` (iteration,xi,support_size,psi).
    pub trace: PathBuf,

    /// Which column to diagnose: xi, support, or psi.
    #[arg(long, default_value = "xi")]
    pub column: String,

    /// Largest autocorrelation lag (capped by the series length).
    #[arg(long, default_value_t = 40)]
    pub max_lag: usize,

    /// Burn-in iterations to drop (default 500).
    #[arg(long, default_value_t = 500)]
    pub burn_in: usize,

    /// Thinning for the retained-sample summary (default 5).
    #[arg(long, default_value_t = 5)]
    pub thin: usize,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON grid description (missing fields take desk-scale defaults).
    pub grid: PathBuf,

    /// rank, cov, sensitivity, or all.
    #[arg(long, default_value = "rank")]
    pub study: String,

    /// Factor budgets for the sensitivity study.
    #[arg(long, default_value = "10,20,50")]
    pub q_values: String,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Directory of .sftr loading snapshots (e.g. fit's snapshots/).
    pub snapshots: PathBuf,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

fn run(cli: &Cli) -> adass_core::Result<()> {
    let threads = cli.global.effective_threads();
    if threads > 0 {
        // Ignore the error when a pool already exists (tests call run()
        // repeatedly in one process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match &cli.command {
        Command::Fit(args) => ops::cmd_fit(args, &cli.global),
        Command::Estimate(args) => ops::cmd_estimate(args, &cli.global),
        Command::Simulate(args) => ops::cmd_simulate(args, &cli.global),
        Command::Diagnose(args) => ops::cmd_diagnose(args, &cli.global),
        Command::Experiment(args) => ops::cmd_experiment(args, &cli.global),
        Command::Align(args) => ops::cmd_align(args, &cli.global),
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
