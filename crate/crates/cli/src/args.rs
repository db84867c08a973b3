use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "spc-rdh", version, about = "Protected single-pixel-camera measurement streams")]
pub struct Cli {
    /// Worker threads for patch-level work (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate acquisition of a PGM image into an original stream file.
    Acquire(AcquireArgs),
    /// Protect part of a stream and embed it into the rest.
    Embed(EmbedArgs),
    /// Recover the original stream from a marked one.
    Extract(ExtractArgs),
    /// Reconstruct an image from a stream file.
    Reconstruct(ReconstructArgs),
    /// Write analysis curves as CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Matrix {
    Hadamard,
    Smatrix,
}

#[derive(Debug, Args)]
pub struct AcquireArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Measurements as a percentage of the pixel count, in (0, 100].
    #[arg(long, default_value_t = 40.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Matrix::Hadamard)]
    pub matrix: Matrix,
    /// Split into square tiles of this side (power of two); tile k is
    /// written next to `--out` with a `_kkkk` suffix and uses seed + k.
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A threshold given as a number or `loose` (half the scene order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdArg {
    Loose,
    Value(u32),
}

impl std::str::FromStr for ThresholdArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("loose") {
            return Ok(ThresholdArg::Loose);
        }
        s.parse::<u32>()
            .map(ThresholdArg::Value)
            .map_err(|_| format!("expected a non-negative integer or `loose`, got `{s}`"))
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub levels: u32,
    #[arg(long, default_value = "loose")]
    pub threshold: ThresholdArg,
    /// Key file; at least 16 bytes.
    #[arg(long)]
    pub key: PathBuf,
    /// Accept thresholds above the 32-bit safe limit.
    #[arg(long)]
    pub allow_overflow: bool,
    /// Constant predictor subtracted before expansion.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub offset: i32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long, default_value = "loose")]
    pub threshold: ThresholdArg,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub offset: i32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Authorized,
    Unauthorized,
    Eca,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Authorized)]
    pub mode: Mode,
    /// Needed for authorized reconstruction of a marked stream.
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long, default_value = "loose")]
    pub threshold: ThresholdArg,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub offset: i32,
    /// Levels stripped by the attack (default: the file's n).
    #[arg(long)]
    pub levels: Option<u32>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    /// Optional CSV trace (iter, objective, residual).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Curve {
    Capacity,
    Rate,
    Remaining,
    Rd,
    Breakdown,
    Eca,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub curves: Vec<Curve>,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    /// Smallest insertion level of the sweep.
    #[arg(long, default_value_t = 1)]
    pub min_levels: u32,
    #[arg(long, default_value_t = 14)]
    pub max_levels: u32,
    #[arg(long, default_value = "loose")]
    pub threshold: ThresholdArg,
    /// Measurement deviation for analytic curves with a numeric threshold.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Measurement count for the analytic curves.
    #[arg(long, default_value_t = 26214)]
    pub total: usize,
    /// Image to tile for the experimental curves (default: synthetic patches).
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub patches: usize,
    #[arg(long, default_value_t = 64)]
    pub patch: usize,
    #[arg(long, default_value_t = 40.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Key file for the experimental curves (default: a fixed test key).
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
}
