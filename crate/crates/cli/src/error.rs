use resot_core::ResotError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attributes a library error to the config or the data, except that a
/// non-finite value is always a numeric failure.
pub trait Blame<T> {
    fn config(self) -> CliResult<T>;
    fn data(self) -> CliResult<T>;
}

fn numeric_or(e: ResotError, other: fn(String) -> CliError) -> CliError {
    match e {
        ResotError::NonFinite(m) => CliError::Numeric(m),
        e => other(e.to_string()),
    }
}

impl<T> Blame<T> for resot_core::Result<T> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| numeric_or(e, CliError::Config))
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| numeric_or(e, CliError::Data))
    }
}

impl<T> Blame<T> for std::io::Result<T> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| CliError::Data(e.to_string()))
    }
}

impl<T> Blame<T> for csv::Result<T> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| CliError::Data(e.to_string()))
    }
}
