//! Command implementations behind the `nc-toolkit` binary.

pub mod args;
mod commands;
pub mod grid;
pub mod output;
pub mod presets;

use std::io;

use nc_toolkit::allocator::AllocError;
use nc_toolkit::channel::ScenarioError;
use nc_toolkit::sim::SimError;
use thiserror::Error;

pub use args::{Cli, Command, CommonArgs};
pub use commands::run;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_RUNTIME_LIMIT: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error("infeasible allocation: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Scenario(_) | CliError::Alloc(_) => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Sim(SimError::RuntimeLimit { .. }) => EXIT_RUNTIME_LIMIT,
            CliError::Sim(SimError::Unreachable { .. } | SimError::InfeasibleLayer(_)) => EXIT_INFEASIBLE,
            CliError::Sim(SimError::InvalidPlan(_) | SimError::Codec(_)) => EXIT_USAGE,
            CliError::Io { .. } | CliError::Csv(_) => 1,
        }
    }
}
