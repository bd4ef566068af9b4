//! Command-line driver: ingest, prompt building, inference, decisions,
//! aggregation, scoring, ranking, fine-tuning export, and simulation.

pub mod commands;
pub mod config;

pub use commands::{default_template, dispatch, parse_schema_spec, Cli, Command};
pub use config::{ConfigArgs, RunConfig};

use clap::Parser;
use perspect_core::{BackendError, Error};

/// Exit codes: 0 success, 1 runtime trouble (io, threshold breach), 2 bad
/// configuration or flags, 3 invalid data, 4 backend transport failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::UnknownSplit(_) => 2,
        Error::Backend(BackendError::Config(_)) => 2,
        Error::Backend(_) => 4,
        Error::Validation(_)
        | Error::Schema(_)
        | Error::Parse { .. }
        | Error::UnknownAnnotator(_)
        | Error::DimensionMismatch(_)
        | Error::MissingPredictions { .. }
        | Error::BudgetTooSmall { .. }
        | Error::DegenerateDistribution { .. } => 3,
        _ => 1,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout and usage errors on stderr.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
