//! `macp`: analysis, selection, training, ablation, memory accounting and
//! merging for hierarchical cosine-projection adapters.
//!
//! Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
//! Machine-readable output goes to stdout (or `--out`), progress to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use macp_core::{InitMode, Method, PartitionScheme};

#[derive(Debug, Parser)]
#[command(name = "macp", version, about = "Hierarchical cosine-projection adapters")]
pub struct Cli {
    /// Base seed. Selection uses it directly; train and ablate default to
    /// consecutive seeds starting here.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output path. A file for analyze, select, memory and merge; a directory
    /// for train and ablate.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Format of reports and summaries.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    #[value(name = "three_band")]
    ThreeBand,
    #[value(name = "low_only")]
    LowOnly,
    #[value(name = "low_high")]
    LowHigh,
    #[value(name = "four_band")]
    FourBand,
}

impl From<SchemeArg> for PartitionScheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::ThreeBand => PartitionScheme::ThreeBand,
            SchemeArg::LowOnly => PartitionScheme::LowOnly,
            SchemeArg::LowHigh => PartitionScheme::LowHigh,
            SchemeArg::FourBand => PartitionScheme::FourBand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    #[value(name = "macp")]
    Macp,
    #[value(name = "lowrank")]
    LowRank,
    #[value(name = "random_spectral")]
    RandomSpectral,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Macp => Method::Macp,
            MethodArg::LowRank => Method::LowRank,
            MethodArg::RandomSpectral => Method::RandomSpectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Kaiming,
    Zero,
}

impl From<InitArg> for InitMode {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::Kaiming => InitMode::Kaiming,
            InitArg::Zero => InitMode::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-band energy shares of a weight matrix's spectrum.
    Analyze(AnalyzeArgs),
    /// Choose spectral coordinates and write a zero-coefficient checkpoint.
    Select(SelectArgs),
    /// Train adapters on the synthetic 8-class task.
    Train(TrainArgs),
    /// Compare partition schemes at a fixed budget.
    Ablate(AblateArgs),
    /// Activation-memory counts for the spectral and low-rank adapters.
    Memory(MemoryArgs),
    /// Fold a checkpoint into its base weight matrix.
    Merge(MergeArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::ThreeBand)]
    pub scheme: SchemeArg,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = macp_core::selection::DEFAULT_DELTA, value_parser = parse_unit)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::ThreeBand)]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 1.0, value_parser = parse_alpha)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 1e-3, value_parser = parse_lr)]
    pub lr: f64,
    /// Comma-separated seeds; defaults to consecutive seeds from `--seed`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1.0, value_parser = parse_alpha)]
    pub alpha: f64,
    #[arg(long, default_value_t = macp_core::selection::DEFAULT_DELTA, value_parser = parse_unit)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Kaiming)]
    pub init: InitArg,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples_per_class: u64,
    /// Accuracy threshold for the epochs-to-target statistic.
    #[arg(long, default_value_t = 0.95, value_parser = parse_unit)]
    pub target: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Train a single method instead of all three.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Spectral budget of the hierarchical adapter, or of the random-spectral
    /// adapter when it is trained alone.
    #[arg(long)]
    pub n: Option<usize>,
    /// Spectral budget of the random-spectral adapter.
    #[arg(long, default_value_t = 128)]
    pub random_n: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub rank: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::ThreeBand)]
    pub scheme: SchemeArg,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated partition schemes.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        num_args = 1..,
        default_value = "low_only,low_high,three_band,four_band"
    )]
    pub schemes: Vec<SchemeArg>,
    #[arg(long, default_value_t = 90)]
    pub n: usize,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct MemoryArgs {
    /// Batch size.
    #[arg(long = "B", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch: u64,
    /// Sequence length.
    #[arg(long = "S", default_value_t = 2048, value_parser = clap::value_parser!(u64).range(1..))]
    pub seq_len: u64,
    /// Hidden size.
    #[arg(long = "H", default_value_t = 4096, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden: u64,
    /// Spectral coefficient count.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Low-rank adapter rank.
    #[arg(long, default_value_t = 32)]
    pub r: u64,
    /// Bytes per activation for the bytes view.
    #[arg(long, default_value_t = macp_core::memory::DEFAULT_ELEMENT_SIZE, value_parser = clap::value_parser!(u64).range(1..))]
    pub element_size: u64,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Payload type of the merged file; defaults to that of `--weights`.
    #[arg(long, value_enum)]
    pub dtype: Option<DtypeArg>,
}

fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_lr(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("learning rate must be finite and non-negative, got {v}"))
    }
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v != 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("scale must be finite and nonzero, got {v}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
