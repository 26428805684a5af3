use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nc_toolkit::codec::Scheme;

use crate::grid::GridSpec;

#[derive(Parser, Debug)]
#[command(
    name = "nc-toolkit",
    version,
    about = "Sparse RLNC delay model, allocator and multicast simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare the analytical delay model with simulation over a grid.
    ValidateModel(CommonArgs),
    /// Choose MCS and sparsity per layer for a scenario.
    Allocate(CommonArgs),
    /// Simulate every scheme on a scenario's allocation.
    Simulate(CommonArgs),
    /// Long-format model/simulation results over arbitrary grids.
    Sweep(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ValidateModel(_) => "validate-model",
            Command::Allocate(_) => "allocate",
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::ValidateModel(a) | Command::Allocate(a) | Command::Simulate(a) | Command::Sweep(a) => a,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Scenario TOML document.
    #[arg(long)]
    pub scenario: Option<PathBuf>,

    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    /// Restrict to one scheme: rlnc, srlnc, s-rlnc or s-srlnc.
    #[arg(long)]
    pub scheme: Option<Scheme>,

    /// Use pruned streams (never send all-zero coding vectors).
    #[arg(long)]
    pub pruned: bool,

    /// Field size, 2 or 256. Repeat to run both.
    #[arg(long = "q", value_parser = parse_q)]
    pub q: Vec<u32>,

    #[arg(long)]
    pub trials: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// KEY=START:STOP:STEP or KEY=VALUE; keys k, q, p_zero, per. `1/q` is
    /// accepted wherever a p_zero value is expected.
    #[arg(long = "grid")]
    pub grid: Vec<GridSpec>,

    /// Refuse grids with more cells than this.
    #[arg(long, default_value_t = 10_000)]
    pub max_cells: usize,

    /// Replace the scenario's layer sizes with a named stream preset.
    #[arg(long)]
    pub preset: Option<String>,

    /// Write a JSONL packet trace of trial 0 as seen by this user (1-based).
    #[arg(long)]
    pub trace_user: Option<usize>,
}

fn parse_q(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(q @ (2 | 256)) => Ok(q),
        _ => Err(format!("field size must be 2 or 256, got `{s}`")),
    }
}
