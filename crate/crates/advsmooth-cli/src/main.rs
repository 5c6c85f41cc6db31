//! `advsmooth`: command-line front end of the laboratory. All behaviour
//! lives in the library half of this crate; this file only parses arguments,
//! dispatches, and maps errors to exit codes (2 config, 3 numeric).

use advsmooth_cli::{dispatch, Cli};
use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
