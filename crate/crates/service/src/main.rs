use std::process::ExitCode;

use clap::Parser;
use diffscope_service::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
