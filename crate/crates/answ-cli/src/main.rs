//! `answ` — batch CLI over the weight compression pipeline.
//!
//! Exit codes: 0 success, 2 input error, 3 corrupt archive data.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand};

use answ::quantizer::ScalePolicy;

#[derive(Parser)]
#[command(name = "answ", version, about = "Tabled-ANS compression for quantized network weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_scale_policy(s: &str) -> Result<ScalePolicy, String> {
    if s == "max-abs" {
        return Ok(ScalePolicy::MaxAbs);
    }
    if let Some(q) = s.strip_prefix("percentile:") {
        let q: f64 = q.parse().map_err(|e| format!("bad percentile: {e}"))?;
        if !(q > 0.0 && q <= 100.0) {
            return Err(format!("percentile {q} must lie in (0, 100]"));
        }
        return Ok(ScalePolicy::Percentile(q));
    }
    Err(format!(
        "unknown scale policy {s:?}; use \"max-abs\" or \"percentile:<q>\""
    ))
}

fn parse_odd_bins(s: &str) -> Result<usize, String> {
    let bins: usize = s.parse().map_err(|e| format!("bad bin count: {e}"))?;
    if bins < 3 || bins > 255 || bins % 2 == 0 {
        return Err(format!("bin count {bins} must be odd and in 3..=255"));
    }
    Ok(bins)
}

#[derive(Args)]
struct StatsArgs {
    /// Tensor manifest (TOML)
    #[arg(long)]
    manifest: PathBuf,
    /// Odd bin count applied to every layer
    #[arg(long, value_parser = parse_odd_bins, default_value = "5")]
    bins: usize,
    /// Precision parameter; bins = 2*round(lambda) + 1
    #[arg(long, conflicts_with = "bins")]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_scale_policy, default_value = "max-abs")]
    scale_policy: ScalePolicy,
    /// Also write the report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_odd_bins, default_value = "5")]
    bins: usize,
    #[arg(long, value_parser = parse_scale_policy, default_value = "max-abs")]
    scale_policy: ScalePolicy,
    /// Output directory for the fake-quantized tensors and their manifest
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("precision").required(true).args(["bins", "target_mb"])))]
struct CompressArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output archive path
    #[arg(long)]
    out: PathBuf,
    /// Fixed odd bin count for every layer
    #[arg(long, value_parser = parse_odd_bins)]
    bins: Option<usize>,
    /// Entropy target in MB (10^6 bytes); bin counts are allocated per layer
    #[arg(long)]
    target_mb: Option<f64>,
    /// tANS table size (power of two)
    #[arg(short = 'l', long, default_value_t = 256)]
    table_size: usize,
    /// Channel axis used to split layers into streams
    #[arg(long, default_value_t = 1)]
    axis: usize,
    /// One stream per channel (true) or one stream per layer (false)
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    parallel: bool,
    #[arg(long, value_parser = parse_scale_policy, default_value = "max-abs")]
    scale_policy: ScalePolicy,
    /// Distortion weight used with --target-mb
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated layer names stored as raw 8-bit bytes, no coding
    #[arg(long, value_delimiter = ',')]
    raw: Vec<String>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct DecompressArgs {
    /// Archive produced by `compress`
    #[arg(long)]
    archive: PathBuf,
    /// Output directory for the reconstructed tensors and manifest
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AllocateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Entropy target in MB (10^6 bytes)
    #[arg(long)]
    target_mb: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = answ::allocation::DEFAULT_LEARNING_RATE)]
    learning_rate: f64,
    #[arg(long, default_value_t = answ::allocation::DEFAULT_MAX_ITERS)]
    iters: usize,
    #[arg(long, value_parser = parse_scale_policy, default_value = "max-abs")]
    scale_policy: ScalePolicy,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchDecodeArgs {
    #[arg(long)]
    archive: PathBuf,
    /// Decode passes; the report shows the median
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Seed for the per-repeat layer decode order
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["counts", "manifest"])))]
struct TableArgs {
    /// Comma-separated symbol counts, e.g. 90,10
    #[arg(long, value_delimiter = ',')]
    counts: Vec<u64>,
    /// Derive the histogram from a manifest layer instead
    #[arg(long, requires = "layer")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    layer: Option<String>,
    #[arg(long, value_parser = parse_odd_bins, default_value = "5")]
    bins: usize,
    #[arg(long, value_parser = parse_scale_policy, default_value = "max-abs")]
    scale_policy: ScalePolicy,
    /// tANS table size (power of two)
    #[arg(short = 'l', long, default_value_t = 64)]
    table_size: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer entropy report: H, H*|W| and raw quantized size
    Stats(StatsArgs),
    /// Fake-quantize tensors (quantize then dequantize) to a new manifest
    Quantize(QuantizeArgs),
    /// Quantize and entropy-code a manifest into an archive
    Compress(CompressArgs),
    /// Reconstruct tensors from an archive
    Decompress(DecompressArgs),
    /// Pick per-layer bin counts for an entropy target
    Allocate(AllocateArgs),
    /// Decode an archive repeatedly and report throughput and exact op counts
    BenchDecode(BenchDecodeArgs),
    /// Dump the decode LUT as CSV
    Table(TableArgs),
}

pub(crate) enum CliError {
    Input(String),
    Lib(answ::Error),
}

impl From<answ::Error> for CliError {
    fn from(e: answ::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "{msg}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Lib(e) => {
                if e.is_corrupt_data() {
                    3
                } else {
                    2
                }
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Stats(args) => commands::stats(args),
        Command::Quantize(args) => commands::quantize(args),
        Command::Compress(args) => commands::compress(args),
        Command::Decompress(args) => commands::decompress(args),
        Command::Allocate(args) => commands::allocate(args),
        Command::BenchDecode(args) => commands::bench_decode(args),
        Command::Table(args) => commands::table(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
