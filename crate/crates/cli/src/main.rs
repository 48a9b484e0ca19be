use std::process::ExitCode;

use clap::Parser;
use qfeedback_cli::app::{main_with, Cli};

fn main() -> ExitCode {
    main_with(Cli::parse())
}
