use std::process::ExitCode;

use clap::Parser;
use dichotomy_kit::cli::{run, Cli};

fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}
