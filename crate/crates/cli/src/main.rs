mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bsspath", version, about = "Best-subset solution paths for PCA, PLS1 and PLS2")]
struct Cli {
    /// Worker threads for concurrent solver runs and replicates
    /// (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Best subset of every size from a dynamic penalty grid.
    Path(PathArgs),
    /// Multi-component model with one subset picked per component.
    Fit(FitArgs),
    /// Exhaustive best subsets (p <= 25).
    Oracle(OracleArgs),
    /// Simulated data sets with a known support.
    Simulate(SimulateArgs),
    /// Support recovery and prediction error against a truth file.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// pls1, pls2 or pca.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub x: PathBuf,
    /// Response file (PLS models).
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Use the data as given instead of centering the columns.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    /// Largest subset size (default: p).
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Solver runs per path, the one at lambda_max included.
    #[arg(long, default_value_t = 20)]
    pub budget: usize,
    /// Terminal threshold on t.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// adam or gd.
    #[arg(long, default_value = "adam")]
    pub solver: String,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PathArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub search: SearchArgs,
    #[arg(long, default_value_t = 1)]
    pub components: usize,
    /// regression or canonical.
    #[arg(long, default_value = "regression")]
    pub mode: String,
    /// cpev-drop=F, min-msep[=test|=V], max-cor or fixed-k=K.
    #[arg(long)]
    pub pick: String,
    /// Folds for cross-validated picks and Q2.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Held-out X and Y files.
    #[arg(long, num_args = 2, value_names = ["X", "Y"])]
    pub test: Option<Vec<PathBuf>>,
    /// Canonical-mode denominator: score-cross or response-score.
    #[arg(long, default_value = "score-cross")]
    pub canonical_denominator: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Largest subset size (default: p).
    #[arg(long)]
    pub max_k: Option<usize>,
    /// A path.json to compare against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// multiresponse, two-component, univariate or pca-cov.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub truth: PathBuf,
    /// Bit string ("0110...") or comma-separated column indices.
    #[arg(long)]
    pub subset: String,
    /// Compare with one component's support instead of the union.
    #[arg(long)]
    pub component: Option<usize>,
    #[arg(long, requires = "test")]
    pub pred: Option<PathBuf>,
    /// Held-out responses matching --pred.
    #[arg(long, requires = "pred")]
    pub test: Option<PathBuf>,
    /// Also write the row to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Parse("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Path(a) => commands::path(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Oracle(a) => commands::oracle(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Metrics(a) => commands::metrics(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bsspath: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
