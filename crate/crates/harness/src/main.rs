use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = nlslab::cli::Cli::parse();
    ExitCode::from(nlslab::cli::execute(&cli))
}
