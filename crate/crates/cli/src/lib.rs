//! The `lm2d` command line: argument parsing, run logs and the workflow commands.

mod commands;
pub mod config;
mod pool;
mod runlog;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use pool::par_map;
pub use runlog::{file_digest, RunLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(lm2d::Error),
    Numeric(lm2d::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e}"),
            CliError::Numeric(e) => write!(f, "numeric failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lm2d::Error> for CliError {
    fn from(e: lm2d::Error) -> Self {
        match e {
            lm2d::Error::KindMismatch { .. } => CliError::Usage(e.to_string()),
            e if e.is_numeric() => CliError::Numeric(e),
            e => CliError::Data(e),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lm2d", version, about = "Lyric- and music-conditioned dance generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory receiving every output of the run.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides one configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-clip work.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Writes a beat-locked synthetic dataset with its manifest.
    MakeSynthetic {
        #[command(flatten)]
        common: Common,
    },
    /// Precomputes conditioning tracks and writes a manifest pointing at them.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Trains the diffusion model on the train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Distills a diffusion checkpoint into a one-step consistency model.
    Distill {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Generates one clip per manifest entry of the configured split.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Multi-step ODE sampling with K steps.
        #[arg(long, value_name = "K", conflicts_with = "one_step")]
        steps: Option<usize>,
        /// Single-evaluation sampling with a consistency checkpoint.
        #[arg(long)]
        one_step: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Scores generated clips against the reference clips and writes a report.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory of a `sample` run.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Trains the motion encoder used for semantic matching.
    EncoderTrain {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::MakeSynthetic { .. } => "make-synthetic",
            Command::ExtractFeatures { .. } => "extract-features",
            Command::Train { .. } => "train",
            Command::Distill { .. } => "distill",
            Command::Sample { .. } => "sample",
            Command::Evaluate { .. } => "evaluate",
            Command::EncoderTrain { .. } => "encoder-train",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::MakeSynthetic { common }
            | Command::ExtractFeatures { common, .. }
            | Command::Train { common, .. }
            | Command::Distill { common, .. }
            | Command::Sample { common, .. }
            | Command::Evaluate { common, .. }
            | Command::EncoderTrain { common, .. } => common,
        }
    }
}

/// Config file first, then `--set`, then `--seed` and `--threads`.
pub fn resolve_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for s in &common.set {
        cfg.apply_override(s)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(t) = common.threads {
        cfg.set("threads", &t.to_string())?;
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(cli.command.common())?;
    commands::dispatch(&cli.command, &cfg)
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("lm2d: {e}");
            e.exit_code()
        }
    }
}
