use std::process::ExitCode;

use clap::Parser;
use mcc::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match mcc::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mcc: {e}");
            ExitCode::FAILURE
        }
    }
}
