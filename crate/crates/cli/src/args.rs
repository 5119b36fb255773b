use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "hthc", version, about = "Two-task asynchronous coordinate descent for Lasso and SVM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write its trace and summary
    Train(TrainArgs),
    /// Run the two-task solver and the single-task baseline on one dataset
    Compare(CompareArgs),
    /// Measure per-update costs of both tasks and write a timing table
    Profile(ProfileArgs),
    /// Choose batch size and worker counts from a timing table
    Tune(TuneArgs),
    /// Convert a LIBSVM file to the binary format
    Convert(ConvertArgs),
    /// Write a synthetic dataset in LIBSVM format
    Gen(GenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Lasso,
    Svm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Libsvm,
    Bin,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Hthc,
    St,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sync {
    Atomic,
    Wild,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Dataset and problem flags shared by `train` and `compare`.
#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long)]
    pub data: PathBuf,
    /// For `bin`, labels are read from `<data>.labels`
    #[arg(long, value_enum, default_value = "libsvm")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
}

/// Solver and stopping flags shared by `train` and `compare`.
#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    #[arg(long, value_enum, default_value = "atomic")]
    pub sync: Sync,
    /// Batch size as a fraction of the coordinates
    #[arg(long, conflicts_with_all = ["batch_size", "auto_tune"])]
    pub batch_frac: Option<f64>,
    #[arg(long, conflicts_with = "auto_tune")]
    pub batch_size: Option<usize>,
    /// Gap-refresh workers
    #[arg(long, conflicts_with = "auto_tune")]
    pub ta: Option<usize>,
    /// Parallel coordinate updates
    #[arg(long, conflicts_with = "auto_tune")]
    pub tb: Option<usize>,
    /// Helper threads per update
    #[arg(long, conflicts_with = "auto_tune")]
    pub vb: Option<usize>,
    /// Take batch size and worker counts from this timing table
    #[arg(long, value_name = "TABLE")]
    pub auto_tune: Option<PathBuf>,
    /// Core budget for --auto-tune (default: available cores, at least 2)
    #[arg(long, requires = "auto_tune")]
    pub cores: Option<usize>,
    #[arg(long, default_value_t = 0.15)]
    pub r_tilde: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    /// Certify every k epochs
    #[arg(long, default_value_t = 1)]
    pub gap_every: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long, value_enum, default_value = "hthc")]
    pub mode: Mode,
    /// Trace CSV output
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Summary JSON output (default: stdout)
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Modes to run
    #[arg(long, value_enum, value_delimiter = ',', default_value = "hthc,st")]
    pub modes: Vec<Mode>,
    /// Merged trace CSV output
    #[arg(long)]
    pub trace: PathBuf,
    /// Skip the double-precision reference run used for suboptimality
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    pub d_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub ta_grid: Vec<usize>,
    /// `T_BxV_B` pairs
    #[arg(long, value_delimiter = ',', default_value = "1x1,2x1,4x1")]
    pub tb_grid: Vec<String>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Columns in the synthetic profiling matrix
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Number of coordinates
    #[arg(long)]
    pub n: usize,
    /// Length of each coordinate's column
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0.15)]
    pub r_tilde: f64,
    #[arg(long)]
    pub cores: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Binary matrix output; labels go to `<output>.labels`
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Samples
    #[arg(long)]
    pub samples: usize,
    #[arg(long)]
    pub features: usize,
    /// Fraction of nonzero true coefficients (lasso)
    #[arg(long, default_value_t = 0.05)]
    pub support: f64,
    /// Target noise (lasso) or label flip probability (svm)
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
