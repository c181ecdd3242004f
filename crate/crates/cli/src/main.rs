use std::process::ExitCode;

use clap::Parser;
use epsilon_complexity_cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
