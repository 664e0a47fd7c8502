use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// SDP relaxation of K-means: generate mixtures, solve, certify, compare, sweep.
#[derive(Debug, Parser)]
#[command(name = "kmeans-sdp", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a Gaussian mixture and write data.txt, labels.txt and manifest.txt.
    Generate(GenerateArgs),
    /// Solve the K-means SDP (or its trace-penalized form) on a dataset.
    Solve(SolveArgs),
    /// Build and verify the dual certificate for a labeling.
    Certify(CertifyArgs),
    /// Run a reference algorithm.
    Baseline(BaselineArgs),
    /// Monte Carlo recovery rates over a grid of separation ratios.
    PhaseDiagram(PhaseArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// key=value file with any of: n, k, p, sigma2, delta2, placement, sizes, seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Minimum squared distance between centers.
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Comma-separated cluster sizes; defaults to n/K each.
    #[arg(long)]
    pub sizes: Option<String>,
    /// orthogonal, simplex or random_sphere.
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 20000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol_primal: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_obj: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.6)]
    pub over_relaxation: f64,
    /// Keep the penalty fixed instead of balancing residuals.
    #[arg(long)]
    pub fixed_rho: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Dataset directory or data file.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of clusters; defaults to the dataset header.
    #[arg(long)]
    pub k: Option<usize>,
    /// Solve the trace-penalized problem with this λ instead.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Where to write the estimated membership matrix.
    #[arg(long)]
    pub out: PathBuf,
    /// Solver trace CSV, one row every 50 iterations.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Exit 2 unless the estimate recovers the labels exactly.
    #[arg(long)]
    pub expect_recovery: bool,
    /// Ground-truth labels; defaults to labels.txt next to the data.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Seed for the rounding step.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Noise variance; defaults to the dataset header.
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Squared center separation; defaults to the generation manifest, then
    /// to a bias-corrected estimate from the labeled means.
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Use this λ instead of λ♯.
    #[arg(long, conflicts_with = "lambda_scale")]
    pub lambda: Option<f64>,
    /// Multiply λ♯ by this factor.
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub tol_eig: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(subcommand)]
    pub which: Baseline,
}

#[derive(Debug, Args)]
pub struct BaselineCommon {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    /// Write the estimated labels here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare against these labels.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Baseline {
    /// Exhaustive K-means (n <= 12, K <= 3).
    Brute(BaselineCommon),
    /// Lloyd's algorithm from a spectral start or a given labeling.
    Lloyd {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectral initialization alone.
    Spectral {
        #[command(flatten)]
        common: BaselineCommon,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Single-flip failure witness for the symmetric two-cluster model.
    Witness {
        #[arg(long)]
        data: PathBuf,
        /// Labels 1/2 mapped to signs +1/-1.
        #[arg(long)]
        labels: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed; overrides master_seed in the config. One of the two is required.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Certificate λ as a multiple of λ♯.
    #[arg(long)]
    pub lambda_scale: Option<f64>,
    /// Record wall-clock runtime (makes the CSV machine dependent).
    #[arg(long)]
    pub record_runtime: bool,
}
