use std::process::ExitCode;

use clap::Parser;
use featmix_cli::Cli;

fn main() -> ExitCode {
    match featmix_cli::run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
