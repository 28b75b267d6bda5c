//! `dlab`: command-line driver for the disentanglement laboratory.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on usage,
//! configuration or I/O errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dlab", version, about = "Linear-Gaussian disentanglement laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Existing directory that receives all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// JSON file with subcommand parameters (see README for the schema).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to the number of cores. Outputs do not
    /// depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the theorem verification suites and write verify_report.csv.
    VerifyTheorems,
    /// Generate a dataset or a model pool.
    GenData(GenDataArgs),
    /// Optimize a linear generator for a data covariance.
    Optimize(OptimizeArgs),
    /// Evaluate disentanglement metrics for one model or a pool.
    Metrics(MetricsArgs),
    /// Rank the models of a pool without ground truth.
    Select(SelectArgs),
    /// Spearman correlations between score columns of several CSV files.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("kind").required(true).args(["circular", "linear", "pool"])))]
pub struct GenDataArgs {
    /// 27 radii x 40 angles of a disc on a 64x64 canvas (PGM files + factors.csv).
    #[arg(long)]
    pub circular: bool,

    /// Linear-Gaussian samples (samples.csv + factors.csv) from --model or --sigma-diag.
    #[arg(long)]
    pub linear: bool,

    /// Noise-ladder model pool (model JSON files + manifest.json).
    #[arg(long)]
    pub pool: bool,

    /// Generator JSON used by --linear.
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Diagonal data covariance; builds the PCA-exact generator.
    #[arg(long, value_delimiter = ',')]
    pub sigma_diag: Option<Vec<f64>>,

    /// Latent dimension for --sigma-diag.
    #[arg(long)]
    pub r: Option<usize>,

    /// Number of samples for --linear.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    /// Encoder noise levels in [0, 1] for --pool.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Infogan,
    Cr,
    Combined,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Objective to maximize (overrides the config file).
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,

    /// Latent dimension.
    #[arg(long)]
    pub r: usize,

    /// Diagonal data covariance.
    #[arg(long, value_delimiter = ',', conflicts_with = "sigma")]
    pub sigma_diag: Option<Vec<f64>>,

    /// Headered CSV with the full covariance matrix.
    #[arg(long)]
    pub sigma: Option<PathBuf>,

    /// Independent optimizer runs (seeds seed, seed+1, ...); the best is saved.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Model JSON (generator plus optional encoder).
    #[arg(long, conflicts_with = "manifest")]
    pub model: Option<PathBuf>,

    /// Pool manifest; every model is evaluated.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    /// Directory with samples.csv and factors.csv. Without it a sample of
    /// the model's own generator is used.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    /// Samples drawn from the generator when no dataset is given.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,

    /// Rows used for the dHSIC estimate of code dependence.
    #[arg(long, default_value_t = 500)]
    pub dhsic_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    ModelCentrality,
    UdrLasso,
    UdrSpearman,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Pool manifest written by `gen-data --pool`.
    #[arg(long)]
    pub manifest: PathBuf,

    #[arg(long, value_enum, default_value = "model-centrality")]
    pub method: MethodArg,

    /// Fraction of the other models averaged per trial (model-centrality).
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,

    /// Resampling trials (model-centrality).
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// Samples drawn from the first model's generator (UDR).
    #[arg(long, default_value_t = 2_000)]
    pub samples: usize,

    /// Lasso penalty (udr-lasso).
    #[arg(long, default_value_t = dlab::selection::UdrVariant::DEFAULT_LAMBDA)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV files with one row per model. Numeric columns become metrics
    /// named `<file stem>.<column>`; `index`, `selected` and `stderr`
    /// columns are skipped.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(commands::Status::Success) => ExitCode::SUCCESS,
        Ok(commands::Status::ChecksFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
