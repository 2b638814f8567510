use mcsperf_calibrate::CalibrateError;
use mcsperf_core::{ModelError, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Calibrate(#[from] CalibrateError),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Threshold(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 0 success, 1 usage or configuration, 2 hardware prerequisite,
    /// 3 validation threshold.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Calibrate(e) if e.is_hardware() => 2,
            CliError::Threshold(_) => 3,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Schema(e.to_string())
    }
}
