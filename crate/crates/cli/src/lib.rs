//! Command-line driver: argument parsing, the subcommands, and the exit-code
//! scheme (0 success, 1 usage, 2 input or validation, 3 undefined statistic).

pub mod args;
pub mod commands;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use cpoverlap_core::Error;

use args::{Cli, Command};
use commands::Outcome;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_UNDEFINED: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Undefined(_) => EXIT_UNDEFINED,
        _ => EXIT_INPUT,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit status. Diagnostics go to stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Calibrate(a) => commands::calibrate_cmd(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Correlate(a) => commands::correlate(a),
        Command::Similarity(a) => commands::similarity_cmd(a),
        Command::SweepAlpha(a) => commands::sweep_alpha(a),
    };
    match result {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Undefined(why)) => {
            eprintln!("cpoverlap: {why}");
            EXIT_UNDEFINED
        }
        Err(e) => {
            eprintln!("cpoverlap: {e}");
            exit_code(&e)
        }
    }
}
