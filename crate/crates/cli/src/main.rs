//! `robsub`: fit robust subspace estimators on CSV data, run seeded
//! simulation and equivariance studies, and score observations against a
//! saved fit.
//!
//! Exit codes: 0 on success, 2 for input or usage errors (including malformed
//! files and invalid flag combinations), 3 when the numerics degenerate on
//! the given data.

mod commands;
mod document;
mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure modes of a command, each mapped to a process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input or usage: unreadable or malformed files, invalid flags,
    /// dimension mismatches. Exit code 2.
    Usage(String),
    /// Numerical degeneracy reported by the estimation routines. Exit code 3.
    Degenerate(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Usage(msg) | CliError::Degenerate(msg) => msg,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }
}

impl From<robsub::Error> for CliError {
    fn from(err: robsub::Error) -> Self {
        if err.is_degeneracy() {
            CliError::Degenerate(err.to_string())
        } else {
            CliError::Usage(err.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "robsub",
    version,
    about = "Robust subspace estimation: fits, simulation studies, diagnostics"
)]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores); the
    /// output is identical for every thread count.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Record wall-clock seconds in the emitted artifacts (off by default so
    /// repeated runs are byte-identical).
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator to a CSV matrix and write a JSON fit document.
    Fit(FitArgs),
    /// Run the accuracy benchmark on simulated data and write a results CSV.
    Simulate(StudyArgs),
    /// Score a data matrix against a saved fit and write the diagnostics CSV.
    Diagnose(DiagnoseArgs),
    /// Measure rotation sensitivity of methods on simulated data.
    Equivariance(StudyArgs),
}

/// Estimator selected by `fit --method`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    /// Subspace S-estimator (biweight M-scale of the distances).
    S,
    /// Subspace LTS-estimator (trimmed scale of the distances).
    Lts,
    /// Classical least-squares PCA.
    Pca,
    /// Spherical PCA around the spatial median.
    Spc,
}

impl FitMethod {
    fn token(self) -> &'static str {
        match self {
            FitMethod::S => "s",
            FitMethod::Lts => "lts",
            FitMethod::Pca => "pca",
            FitMethod::Spc => "spc",
        }
    }
}

/// Starting bases for the iterative estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartsKind {
    /// Five data-driven starts from transformed copies of the data.
    Deterministic,
    /// Seeded random orthonormal starts.
    Random,
}

#[derive(Args)]
pub struct FitArgs {
    /// Input CSV matrix; rows are observations, columns are coordinates.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Subspace dimension (1 <= q <= min(rows, columns)).
    #[arg(long)]
    pub q: usize,
    /// Estimator to fit.
    #[arg(long, value_enum)]
    pub method: FitMethod,
    /// Starting bases for the robust estimators [default: deterministic].
    #[arg(long, value_enum)]
    pub starts: Option<StartsKind>,
    /// Target breakdown point, 0.5 or 0.25 [default: 0.5].
    #[arg(long, value_parser = parse_bdp)]
    pub bdp: Option<f64>,
    /// Trimming proportion in [0, 0.5] for the LTS objective (overrides
    /// --bdp).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of random starts [default: 50].
    #[arg(long, value_name = "N")]
    pub n_starts: Option<usize>,
    /// RNG seed; only the random-starts path draws from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the JSON fit document.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Flags shared by `simulate` and `equivariance`.
#[derive(Args)]
pub struct StudyArgs {
    /// Eigenvalue design: `a` (abrupt step), `b` (geometric), or `hd`
    /// (calibrated 80% share).
    #[arg(long)]
    pub design: String,
    /// Observations per replicate.
    #[arg(long)]
    pub n: usize,
    /// Data dimension.
    #[arg(long)]
    pub p: usize,
    /// Subspace dimension.
    #[arg(long)]
    pub q: usize,
    /// Contamination fraction in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    pub eps: f64,
    /// Outlier distances: comma-separated values or an inclusive lo:step:hi
    /// range.
    #[arg(long, default_value = "0", value_name = "GRID")]
    pub k_grid: String,
    /// Replicates per grid point.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Comma-separated method tokens (pca, spc, dsubs, dsublts, rsubs,
    /// rsublts).
    #[arg(long, default_value = "dsubs", value_name = "LIST")]
    pub methods: String,
    /// Base RNG seed; each replicate derives its own stream from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Data CSV to score; must have as many columns as the fit document.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// JSON fit document produced by `fit`.
    #[arg(long, value_name = "PATH")]
    pub fit: PathBuf,
    /// Output CSV path (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

/// Accepts exactly the two supported breakdown points.
fn parse_bdp(text: &str) -> Result<f64, String> {
    let value: f64 = text
        .parse()
        .map_err(|_| format!("{text:?} is not a number"))?;
    if value == 0.5 || value == 0.25 {
        Ok(value)
    } else {
        Err("breakdown point must be 0.5 or 0.25".to_string())
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // The pool can be configured only once per process; a failure here
        // means it is already running, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let result = match &cli.command {
        Command::Fit(args) => commands::cmd_fit(args, cli.timing),
        Command::Simulate(args) => commands::cmd_simulate(args, cli.timing),
        Command::Diagnose(args) => commands::cmd_diagnose(args),
        Command::Equivariance(args) => commands::cmd_equivariance(args),
    };
    if let Err(err) = result {
        eprintln!("error: {}", err.message());
        std::process::exit(err.exit_code());
    }
}
