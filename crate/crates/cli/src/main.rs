mod args;
mod commands;
mod report;

use std::io::ErrorKind;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use csviu_core::CsviuError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Norm(a) => commands::norm(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // output piped into something that closed early
        Err(CsviuError::Io(e)) if e.kind() == ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("csviu: {e}");
            // 2: bad input, 3: numerical failure
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
