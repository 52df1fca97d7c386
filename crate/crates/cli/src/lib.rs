//! `svplab` command line: config loading, subcommands and result files.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

pub use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config {}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] svplab::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) | CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } | CliError::Run(_) | CliError::Pool(_) => exit::RUNTIME,
        }
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    /// Solver, numerical or file-system failure.
    pub const RUNTIME: i32 = 1;
    /// Bad flags or config.
    pub const USAGE: i32 = 2;
    /// The run finished but some trials failed; see `failures.csv`.
    pub const FAILED_TRIALS: i32 = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Parser)]
#[command(name = "svplab", version, about = "Support vector proliferation experiments")]
pub struct Cli {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overrides `[run] seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, env = "SVPLAB_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
    /// Write only the artifacts of this format (default: all).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One trial: verdict, diagnostics and both solutions.
    Solve {
        /// Trial index, overrides `[solve] trial`.
        #[arg(long)]
        trial: Option<u64>,
    },
    /// Target, MNI and SVM overlays for three bi-level settings.
    Figure1,
    /// SVP proportion over an (r, q) grid.
    Heatmap,
    /// Excess classification risk across sample sizes.
    Risk,
    /// Per-trial diagnostics sweep.
    Diagnostics,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Figure1 => "figure1",
            Command::Heatmap => "heatmap",
            Command::Risk => "risk",
            Command::Diagnostics => "diagnostics",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok(0) => exit::OK,
        Ok(failed) => {
            eprintln!("{failed} trial(s) failed; see failures.csv");
            exit::FAILED_TRIALS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command; returns the number of failed trials.
pub fn execute(cli: Cli) -> Result<usize, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("svplab-out"));
    let workers = match cli.workers.or(config.run.workers) {
        Some(0) => return Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let ctx = commands::Context {
        config,
        out,
        workers,
        format: cli.format,
    };
    pool.install(|| commands::dispatch(&ctx, &cli.command))
}
