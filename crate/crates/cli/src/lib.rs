pub mod args;
pub mod commands;
pub mod manifest;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Errors raised by the command layer itself, tagged with their exit status.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numeric(String),
}

/// Exit status for an error: 1 usage, 2 invalid input, 3 numeric failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Validation(_) => EXIT_VALIDATION,
                Failure::Numeric(_) => EXIT_NUMERIC,
            };
        }
        if let Some(e) = cause.downcast_ref::<dan_core::Error>() {
            use dan_core::tensor::TensorError;
            use dan_core::Error as E;
            return match e {
                E::Validation(_) | E::Parse { .. } | E::Checkpoint(_) | E::Json(_) => EXIT_VALIDATION,
                E::NonFiniteLoss { .. } | E::Tensor(TensorError::Domain { .. }) => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
