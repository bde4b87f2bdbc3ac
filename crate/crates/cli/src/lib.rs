//! Command-line front end: model files, strategy files and the subcommands.

mod commands;
pub mod json;
pub mod modelfile;
pub mod strategy_io;

pub use commands::{execute, run, Class, Cli, Command, Flags, Outcome, EXIT_INPUT, EXIT_NOT_RESILIENT};

use modelfile::ParseError;
use strategy_io::StrategyFileError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Model(String, ParseError),
    #[error(transparent)]
    Strategy(#[from] StrategyFileError),
    #[error(transparent)]
    Core(#[from] resilience_core::Error),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}")]
    Usage(String),
}
