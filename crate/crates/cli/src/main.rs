use std::process::ExitCode;

use clap::Parser;
use nc_toolkit_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("NC_TOOLKIT_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: {e}");
                }
            }
            _ => {
                eprintln!("error: NC_TOOLKIT_THREADS must be a positive integer, got `{n}`");
                return ExitCode::from(nc_toolkit_cli::EXIT_USAGE);
            }
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
