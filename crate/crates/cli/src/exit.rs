//! Exit codes: 0 success, 1 runtime or numeric failure, 2 config or usage
//! error.

use std::fmt;

use shiftnorm::Error;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub fn usage(msg: impl fmt::Display) -> CliError {
    CliError {
        code: EXIT_USAGE,
        error: anyhow::anyhow!("{msg}"),
    }
}

pub fn runtime(msg: impl fmt::Display) -> CliError {
    CliError {
        code: EXIT_RUNTIME,
        error: anyhow::anyhow!("{msg}"),
    }
}

/// Bad inputs map to the usage code, numeric trouble and IO to the runtime
/// code.
impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::InvalidNetwork(_)
            | Error::Format(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::DimensionMismatch { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            error: e.into(),
        }
    }
}

/// Adds context while keeping the exit code.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn context(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| {
            let e = e.into();
            CliError {
                code: e.code,
                error: e.error.context(what.to_string()),
            }
        })
    }
}
