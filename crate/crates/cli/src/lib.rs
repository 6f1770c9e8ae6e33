//! Command-line driver for the `clusterfed` simulator.
//!
//! ```text
//! clusterfed [--config PATH] [--seed N] [--out DIR] [--preset desk|paper] <COMMAND>
//! ```
//!
//! Exit codes: 0 on success, 1 for invalid configuration or input data, 2
//! for runtime failures (I/O, protocol errors, failed gradient checks).

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_evaluate, cmd_gradcheck, cmd_latency, cmd_prepare, cmd_train, prepare_data};
pub use config::{ExperimentConfig, Overrides, Preset};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] clusterfed::Error),
    #[error("gradient check failed\n{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) if e.is_input_error() => 1,
            CliError::Core(_) | CliError::Check(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clusterfed", version, about = "Cluster-based hierarchical federated learning simulator")]
pub struct Cli {
    /// TOML experiment file, merged over the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, preprocess and partition the data; write the prepared files.
    Prepare,
    /// Run federated training and write parameters, logs and reports.
    Train,
    /// Evaluate stored parameters on the test split.
    Evaluate {
        /// Parameter file (defaults to <out>/global_params.hfnd).
        #[arg(long, value_name = "PATH")]
        params: Option<PathBuf>,
    },
    /// Compare analytical timing of the lightweight and standard models.
    Latency,
    /// Finite-difference check of the analytic gradients.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            seed: self.seed,
            out: self.out.clone(),
            preset: self.preset,
        }
    }
}

/// Runs one parsed invocation and returns the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = ExperimentConfig::load(&cli.overrides())?;
    match &cli.command {
        Command::Prepare => cmd_prepare(&cfg),
        Command::Train => cmd_train(&cfg, cli.preset).map(|s| s.render()),
        Command::Evaluate { params } => cmd_evaluate(&cfg, params.as_deref()),
        Command::Latency => cmd_latency(&cfg).map(|c| c.render()),
        Command::Gradcheck { corrupt } => cmd_gradcheck(cfg.seed, *corrupt),
    }
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
