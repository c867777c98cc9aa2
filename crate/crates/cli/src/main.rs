//! Command-line front end for the optimizer experiment harness.
//!
//! Exit codes: 0 when every built-in check of the dispatched run passed,
//! 1 when at least one check failed, 2 on configuration or I/O errors.

use std::process::ExitCode;

use clap::Parser;

mod config;
mod emit;
mod records;
mod run;

fn main() -> ExitCode {
    let cli = run::Cli::parse();
    match run::execute(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more built-in checks failed");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
