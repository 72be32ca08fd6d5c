//! Benchmark harness for pooled counters: sketch and histogram experiment
//! sweeps as CSV, trace generation, and lookup-table inspection.
//!
//! Exit codes: 0 on success, 1 on internal errors, 2 on usage errors.

mod commands;
mod csv_out;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use counterpools::workload::ZipfSpec;

use params::UsageError;

#[derive(Parser)]
#[command(name = "counterpools", version, about = "Counter pool benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a binary key-trace file (synthetic Zipf or converted)
    GenTrace(GenTraceArgs),
    /// Sweep sketch experiments and emit CSV rows
    BenchSketch(BenchSketchArgs),
    /// Sweep exact-histogram experiments and emit CSV rows
    BenchHistogram(BenchHistogramArgs),
    /// Build, inspect, and optionally cache the lookup tables
    Tables(TablesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Algo {
    /// Count-Min updates
    Cm,
    /// Conservative updates
    Cu,
}

#[derive(Args)]
pub struct GenTraceArgs {
    /// Zipf skew for a synthetic trace
    #[arg(long, conflicts_with = "from")]
    pub alpha: Option<f64>,
    /// Number of keys to generate (required with --alpha)
    #[arg(long)]
    pub count: Option<u64>,
    /// Zipf universe (distinct ranks)
    #[arg(long, default_value_t = ZipfSpec::DEFAULT_UNIVERSE)]
    pub universe: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Convert an existing trace (binary, or CSV by .csv extension)
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// Output path for the binary trace
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchSketchArgs {
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// pooled | baseline32
    #[arg(long, default_value = "pooled")]
    pub variant: String,
    /// Comma-separated byte budgets, e.g. 16KB,64KB,1MB
    #[arg(long = "memory-bytes")]
    pub memory_bytes: String,
    #[arg(long, default_value_t = 4)]
    pub rows: usize,
    /// Pool family as n,k,s,i
    #[arg(long = "pool-config", default_value = "64,4,0,1")]
    pub pool_config: String,
    /// ignore | offload (with optional :fraction) | merge
    #[arg(long, default_value = "merge")]
    pub failure: String,
    /// zipf:alpha:length | trace:path
    #[arg(long)]
    pub dataset: String,
    #[arg(long = "zipf-universe", default_value_t = ZipfSpec::DEFAULT_UNIVERSE)]
    pub zipf_universe: u64,
    /// nrmse | are:theta | throughput
    #[arg(long)]
    pub metric: String,
    /// Comma-separated seeds
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Timed repetitions for the throughput metric
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// CSV output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchHistogramArgs {
    /// Comma-separated bucket-count exponents (buckets = 2^b)
    #[arg(long = "buckets-exp")]
    pub buckets_exp: String,
    /// Key width in bits
    #[arg(long = "key-bits", default_value_t = 32)]
    pub key_bits: u32,
    #[arg(long = "pool-config", default_value = "64,4,0,1")]
    pub pool_config: String,
    /// zipf:alpha:length | trace:path
    #[arg(long)]
    pub dataset: String,
    #[arg(long = "zipf-universe", default_value_t = ZipfSpec::DEFAULT_UNIVERSE)]
    pub zipf_universe: u64,
    #[arg(long, default_value = "1")]
    pub seeds: String,
    /// Displacement bound per insert before reporting the table full
    #[arg(long = "max-kicks", default_value_t = 500)]
    pub max_kicks: u32,
    /// CSV output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Debug dump of the final table as bucket,slot,key,count CSV
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args)]
pub struct TablesArgs {
    /// Pool family as n,k,s,i
    #[arg(long = "pool-config")]
    pub pool_config: Option<String>,
    /// Report on all shipped presets
    #[arg(long = "all-presets")]
    pub all_presets: bool,
    /// Write cache files after building
    #[arg(long)]
    pub cache: bool,
    /// Cache directory (default: $COUNTERPOOLS_TABLE_DIR)
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenTrace(args) => commands::gen_trace(args),
        Command::BenchSketch(args) => commands::bench_sketch(args),
        Command::BenchHistogram(args) => commands::bench_histogram(args),
        Command::Tables(args) => commands::tables(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
