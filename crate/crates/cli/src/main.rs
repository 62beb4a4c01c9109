mod args;
mod commands;
mod error;
mod io;
mod render;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_INPUT, EXIT_OK};

/// Thread count for the parallel parts of the core library.
const THREADS_ENV: &str = "NB2_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Verify(a) => commands::cmd_verify(a),
        Command::Info(a) => commands::cmd_info(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
