//! `fot`: generate synthetic point clouds, estimate squared Wasserstein
//! distances, run parameter sweeps and transfer labels between datasets.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "fot",
    version,
    about = "Factored optimal transport experiments"
)]
struct Cli {
    /// JSON file with defaults for any flag (keys use underscores).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic source/target pair as CSV files.
    Gen(GenArgs),
    /// Estimate the squared distance between two point clouds; prints JSON.
    Estimate(EstimateArgs),
    /// Run a seeded parameter sweep and write a CSV of results.
    Sweep(SweepArgs),
    /// Transfer target labels onto the source and report the error rate.
    Adapt(AdaptArgs),
}

/// Solver settings shared by the transport methods.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Number of hubs (also the k-means size for kot).
    #[arg(long)]
    pub k: Option<usize>,
    /// Entropic regularization.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Inner marginal tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Inner iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative tolerance of the outer alternating minimization.
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub outer_max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest cost matrix (entries) handed to the exact solver.
    #[arg(long)]
    pub exact_cap: Option<usize>,
}

/// Generator selection shared by `gen` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct GeneratorArgs {
    /// hypercube, disk_annulus or gaussian_mixture.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Points per sample.
    #[arg(long)]
    pub n: Option<usize>,
    /// Mixture components.
    #[arg(long)]
    pub components: Option<usize>,
    /// Mixture component standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Distance between adjacent mixture means.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Target displacement along the first axis.
    #[arg(long)]
    pub shift: Option<f64>,
}

/// CSV reading options.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Skip the first line of each input file.
    #[arg(long)]
    pub header: bool,
    /// The last column of each input file is a label.
    #[arg(long)]
    pub labels: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub gen: GeneratorArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; receives source.csv and target.csv.
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite existing files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// fot, ot, sinkhorn or kot.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub input: InputArgs,
    /// Let `ot` fall back to an entropic plan above the exact cap.
    #[arg(long)]
    pub allow_approx: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub gen: GeneratorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Swept variable: n, d or k.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Comma-separated values of the swept variable.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<usize>>,
    /// Comma-separated methods among fot, ot, sinkhorn, kot.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// In d sweeps, use n = n_per_dim * d.
    #[arg(long)]
    pub n_per_dim: Option<usize>,
    /// Leave the runtime column empty so reruns are byte-identical.
    #[arg(long)]
    pub no_runtime: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// fot, ot, sinkhorn, kot or nn_only.
    #[arg(long)]
    pub method: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Neighbors in the label vote.
    #[arg(long)]
    pub knn: Option<usize>,
    /// Skip the first line of each input file.
    #[arg(long)]
    pub header: bool,
    /// Source rows with a predicted-label column appended.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("FOT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("FOT_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        bail!("FOT_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_threads()?;
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => commands::gen(&a, &file),
        Command::Estimate(a) => commands::estimate(&a, &file),
        Command::Sweep(a) => commands::sweep(&a, &file),
        Command::Adapt(a) => commands::adapt(&a, &file),
    }
}
