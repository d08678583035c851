//! Command-line front end: `circles fit|eval|maintain|seed|synth|bench|seed-sweep`.
//!
//! Exit status is 0 on success, 1 on usage errors and 2 on data errors
//! (unreadable or malformed input, failed fits).

use std::ffi::OsString;
use std::path::PathBuf;

use circles_core::eval::Metric;
use circles_core::FeatureScheme;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod output;

pub use output::{emit_plot_data, FitOutput, Observation, PlotRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] circles_core::Error),
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "circles", version, about = "Detect social circles in ego-networks")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit circles to one or more ego-networks.
    Fit(FitArgs),
    /// Score predicted circles against ground truth.
    Eval(EvalArgs),
    /// Assign circles to a new friend of an already fitted ego.
    Maintain(MaintainArgs),
    /// Fit circles constrained to contain given seed nodes.
    Seed(SeedArgs),
    /// Write a synthetic ego-network with planted circles.
    Synth(SynthArgs),
    /// Time fits on synthetic networks of increasing size.
    Bench(BenchArgs),
    /// Score seeded fits as the number of seeds per circle grows.
    SeedSweep(SeedSweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KArg {
    Auto,
    Fixed(usize),
}

fn parse_k(s: &str) -> Result<KArg, String> {
    if s == "auto" {
        return Ok(KArg::Auto);
    }
    match s.parse() {
        Ok(k) if k > 0 => Ok(KArg::Fixed(k)),
        _ => Err(format!("expected a positive integer or \"auto\", got {s:?}")),
    }
}

fn parse_scheme(s: &str) -> Result<FeatureScheme, String> {
    s.parse().map_err(|e: circles_core::Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: circles_core::Error| e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Coordinate,
    Mcmc,
}

/// Input network and model options shared by the fitting subcommands.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Directory holding `<ego>.edges`, `<ego>.feat`, ...
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, value_parser = parse_scheme, default_value = "phi1")]
    pub features: FeatureScheme,
    /// Treat edges as directed.
    #[arg(long)]
    pub directed: bool,
    /// L1 strength on the circle weights.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Cap on coordinate-ascent outer iterations.
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Ego id; repeat to fit several networks in parallel.
    #[arg(long, required = true)]
    pub ego: Vec<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Circle count, or `auto` for a BIC sweep over `1..=k-max`.
    #[arg(long, value_parser = parse_k, default_value = "auto")]
    pub k: KArg,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    #[arg(long, value_enum, default_value_t = Engine::Coordinate)]
    pub engine: Engine,
    /// MCMC sweeps.
    #[arg(long, default_value_t = 100)]
    pub sweeps: usize,
    /// MCMC initial temperature.
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// MCMC temperature decay per sweep.
    #[arg(long, default_value_t = 0.95)]
    pub decay: f64,
    /// MCMC sweeps between parameter steps.
    #[arg(long, default_value_t = 10)]
    pub param_every: usize,
    /// Output file (single ego only); stdout by default.
    #[arg(long, conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Writes `<ego>.fit.json` per ego.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Fit JSON or `.circles` file; repeat with `--truth` for several networks.
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth `.circles` file, paired with `--pred` in order.
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    /// Report only this metric; both by default.
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Metric>,
    /// Score unmatched circles as chance instead of ignoring them.
    #[arg(long)]
    pub strict: bool,
    /// Score table, CSV unless the name ends in `.json`; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Long-format rows (dataset, scheme, metric, param, value, stderr).
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaintainArgs {
    /// Fit JSON of the ego.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub ego: String,
    /// First line: the new friend's feature bits. Other lines: ids of
    /// friends they are connected to; a leading `in` marks incoming edges
    /// of a directed network.
    #[arg(long)]
    pub new_node: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[arg(long)]
    pub ego: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON object mapping circle names to seed node ids.
    #[arg(long)]
    pub seeds: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; missing fields take defaults.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// File name stem of the written network.
    #[arg(long, default_value = "synth")]
    pub ego: String,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = Engine::Mcmc)]
    pub engine: Engine,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_value = "500,1000,2500,5000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Timed sweeps (mcmc) or outer iterations (coordinate) per size.
    #[arg(long, default_value_t = 5)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedSweepArgs {
    #[arg(long)]
    pub ego: String,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ground truth; `<dir>/<ego>.circles` by default.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Number of target circles seeded and scored per trial.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Comma-separated seeds-per-circle values.
    #[arg(long = "seeds-per-circle", value_delimiter = ',', default_value = "0,1,2,3,5")]
    pub seeds_per_circle: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, value_parser = parse_metric, default_value = "ber")]
    pub metric: Metric,
    /// Plot rows, CSV unless the name ends in `.json`; stdout by default.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Worker count for batch fits: `CIRCLES_THREADS` if set, else the
/// available parallelism.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("CIRCLES_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("CIRCLES_THREADS must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
