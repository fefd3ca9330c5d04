//! `pcarpet`: certificates, conductance and disparity scans, and cutoff constructions
//! on self-similar grid partitions.

mod cache;
mod commands;
mod context;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pcarpet", version, about)]
pub struct Cli {
    /// Built-in scheme (interval2, square2, square3, sierpinski-carpet) or a scheme file.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// File with one measure weight per kept cell; uniform weights when absent.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Deepest level to examine (subcommand specific default).
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory of the JSON-lines result cache; no caching when absent.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Directory for JSON and CSV outputs; stdout only when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degree bound, M*, projected neighbourhood inclusions and covering numbers.
    Check(CheckArgs),
    /// Effective or ring conductance of one Dirichlet problem.
    Conductance(ConductanceArgs),
    /// Neighbour disparity of one patch or of a whole covering family.
    Disparity(DisparityArgs),
    /// Fits of the scaling rate from conductances and disparities over a p grid.
    SigmaScan(ScanArgs),
    /// The crossing of the fitted rate through 1.
    Dimar(DimarArgs),
    /// The cutoff construction of an unbounded function with bounded scaled energies.
    Construct(ConstructArgs),
    /// Timings of ring conductance solves at increasing depth.
    Bench(BenchArgs),
    /// Result cache maintenance.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    /// Keeps the latest record per input hash.
    Compact,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Largest M tried for M*.
    #[arg(long, default_value_t = 4)]
    m_hi: usize,
    /// Largest k of the projected inclusion check.
    #[arg(long, default_value_t = 2)]
    k_max: usize,
}

#[derive(Args, Debug)]
struct ConductanceArgs {
    #[arg(long)]
    p: f64,
    /// Refinement depth of the Dirichlet problem.
    #[arg(long, default_value_t = 0)]
    m: usize,
    /// Ring conductance around this word (dotted symbols).
    #[arg(long, conflicts_with_all = ["a1", "a2"])]
    word: Option<String>,
    /// Cells with value 1, comma separated words of one level.
    #[arg(long, requires = "a2")]
    a1: Option<String>,
    /// Cells with value 0.
    #[arg(long, requires = "a1")]
    a2: Option<String>,
    #[arg(long, default_value_t = 1)]
    mstar: usize,
}

#[derive(Args, Debug)]
struct DisparityArgs {
    #[arg(long)]
    p: f64,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// A single patch, comma separated words of one level.
    #[arg(long, conflicts_with = "level")]
    set: Option<String>,
    /// Maximise over the covering family at this level.
    #[arg(long)]
    level: Option<usize>,
    /// Covering family file (one patch per line); stars when absent.
    #[arg(long)]
    covering: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScanSource {
    Both,
    Conductance,
    Disparity,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Comma separated p values.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    m_min: usize,
    #[arg(long, default_value_t = 4)]
    m_max: usize,
    /// Level of the covering family for disparities; the ring sample level when absent.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScanSource::Both)]
    source: ScanSource,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value_t = 1)]
    mstar: usize,
}

#[derive(Args, Debug)]
struct DimarArgs {
    #[arg(long, default_value_t = 1.1)]
    p_lo: f64,
    #[arg(long, default_value_t = 4.0)]
    p_hi: f64,
    #[arg(long, default_value_t = 0.01)]
    tol_p: f64,
    #[arg(long, default_value_t = 2)]
    m_min: usize,
    #[arg(long, default_value_t = 4)]
    m_max: usize,
    #[arg(long, default_value_t = 1)]
    mstar: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CutoffArg {
    /// Energy minimiser under both constraints.
    Min,
    /// Pointwise max of per-cell minimisers.
    Max,
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long, default_value_t = 1.3)]
    p: f64,
    /// A positive value, or `fit` for the conductance-fitted rate.
    #[arg(long, default_value = "fit")]
    sigma: String,
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    /// Period of the target address (dotted symbols); the corner cell when absent.
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, value_enum, default_value_t = CutoffArg::Min)]
    cutoff: CutoffArg,
    /// Depths of the conductance fit used by `--sigma fit`.
    #[arg(long, default_value_t = 1)]
    fit_m_min: usize,
    #[arg(long, default_value_t = 4)]
    fit_m_max: usize,
    #[arg(long, default_value_t = 1)]
    mstar: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2.0])]
    p: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    mstar: usize,
}

/// A bad invocation that clap cannot see: exit code 2.
#[derive(Debug)]
pub struct Usage(String);

/// A negative analytic verdict: exit code 1.
#[derive(Debug)]
pub struct Failure(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failure {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn failure(msg: impl Into<String>) -> anyhow::Error {
    Failure(msg.into()).into()
}

fn core_code(e: &pcarpet_core::Error) -> u8 {
    use pcarpet_core::Error as E;
    match e {
        E::AtSample { source, .. } => core_code(source),
        E::NonConvergence { .. } => 3,
        E::InvalidScheme(_)
        | E::SchemeParse { .. }
        | E::InvalidWeights(_)
        | E::InvalidWord { .. }
        | E::LevelMismatch { .. }
        | E::InvalidArgument(_)
        | E::OverlappingSets(_)
        | E::EmptyGround { .. }
        | E::Io(_) => 2,
        _ => 1,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<pcarpet_core::Error>() {
            return core_code(e);
        }
        if cause.is::<Usage>() || cause.is::<std::io::Error>() {
            return 2;
        }
        if cause.is::<Failure>() {
            return 1;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
