use std::process::ExitCode;

use cdma_bounds::cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    run(Cli::parse())
}
