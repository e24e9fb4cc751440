use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use lrlstm_core::Error;

mod cli;
mod commands;
mod config;

use cli::{Cli, Command};
use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const FORMAT: u8 = 4;
    pub const INVALID: u8 = 5;
    pub const DIVERGED: u8 = 6;
}

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    Usage(String),
    Config(String),
    Invalid(String),
    Io { path: PathBuf, source: std::io::Error },
    Other(String),
}

impl Failure {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Failure::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => exit::USAGE,
            Failure::Io { .. } | Failure::Core(Error::Io { .. }) => exit::IO,
            Failure::Config(_) | Failure::Core(Error::Format(_)) => exit::FORMAT,
            Failure::Invalid(_)
            | Failure::Core(
                Error::InvalidShape(_)
                | Error::Shape(_)
                | Error::InvalidRank { .. }
                | Error::InvalidBudget { .. }
                | Error::EmptyCorpus
                | Error::CorpusTooShort { .. }
                | Error::Vocab(_)
                | Error::AlreadyCompressed(_)
                | Error::DegenerateCompression { .. },
            ) => exit::INVALID,
            Failure::Core(Error::Diverged { .. }) => exit::DIVERGED,
            Failure::Core(Error::InvalidMatrix(_)) | Failure::Other(_) => exit::FAILURE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(Error::Diverged { epoch, step }) => write!(
                f,
                "training diverged (non-finite loss) at epoch {epoch}, step {step}; retry with a smaller --lr or --clip"
            ),
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Other(m) => f.write_str(m),
            Failure::Config(m) => write!(f, "config: {m}"),
            Failure::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn load_config(path: &Path, command: &str) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if cfg.name() != command {
        return Err(Failure::Config(format!(
            "{} holds a `{}` configuration, not `{command}`",
            path.display(),
            cfg.name()
        )));
    }
    Ok(cfg)
}

macro_rules! resolve {
    ($cli:expr, $variant:ident, $args:expr, $name:literal) => {{
        let mut cfg = match &$cli.config {
            Some(path) => match load_config(path, $name)? {
                RunConfig::$variant(c) => c,
                _ => unreachable!("command name checked"),
            },
            None => Default::default(),
        };
        $args.apply(&mut cfg);
        cfg
    }};
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Train(a) => commands::train(&resolve!(cli, Train, a, "train")),
        Command::Compress(a) => commands::compress(&resolve!(cli, Compress, a, "compress")),
        Command::Finetune(a) => commands::finetune(&resolve!(cli, Finetune, a, "finetune")),
        Command::Eval(a) => commands::eval(&resolve!(cli, Eval, a, "eval")),
        Command::Sweep(a) => commands::sweep(&resolve!(cli, Sweep, a, "sweep")),
        Command::Bench(a) => commands::bench(&resolve!(cli, Bench, a, "bench")),
        Command::Norms(a) => commands::norms(&resolve!(cli, Norms, a, "norms")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
