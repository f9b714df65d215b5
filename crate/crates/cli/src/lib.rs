//! Command-line front end for the sensing pipeline.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod checks;
pub mod commands;
pub mod config;
pub mod output;

use commands::Context;
use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<plasmo_core::Error> for CliError {
    fn from(e: plasmo_core::Error) -> Self {
        match e {
            plasmo_core::Error::Usage(_) | plasmo_core::Error::OrderMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "plasmo",
    version,
    about = "Plasmonic sensing with a particle pair"
)]
pub struct Cli {
    /// JSON configuration; defaults apply to missing sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Noise and multi-start seed, overriding the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "PLASMO_THREADS")]
    pub threads: Option<usize>,
    /// Print quick closed-form checks before the command.
    #[arg(long, global = true)]
    pub check: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Response scan and interaction spectrum.
    Forward {
        /// Scan the bare pair only.
        #[arg(long)]
        no_target: bool,
    },
    /// Simulated peak measurements over rotation angles.
    Measure,
    /// Fit contracted tensors to a measurement file.
    Recover {
        #[arg(long)]
        measurements: PathBuf,
        /// Reference table for the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Reconstruct the image shape from a tensor table.
    Reconstruct {
        #[arg(long)]
        cgpt: PathBuf,
    },
    /// All stages end to end.
    Pipeline,
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Context::new(load_config(cli.config.as_ref())?, cli.out, cli.seed)?;
    if cli.check {
        for c in checks::run_all()? {
            eprintln!("{c}");
        }
    }
    match cli.command {
        Command::Forward { no_target } => commands::forward(&ctx, no_target).map(|_| ()),
        Command::Measure => commands::measure(&ctx).map(|_| ()),
        Command::Recover { measurements, truth } => commands::recover(&ctx, &measurements, truth.as_deref()).map(|_| ()),
        Command::Reconstruct { cgpt } => commands::reconstruct_shape(&ctx, &cgpt, None).map(|_| ()),
        Command::Pipeline => commands::pipeline(&ctx).map(|_| ()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("plasmo: {e}");
            e.exit_code()
        }
    }
}
