use mcsperf_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibrateError {
    #[error("insufficient cores: need {needed}, have {available}")]
    InsufficientCores { needed: usize, available: usize },
    #[error("timer resolution {resolution_ns} ns is too coarse for a {duration_s} s measurement")]
    TimerResolution { resolution_ns: f64, duration_s: f64 },
    #[error("calibration invalid: {0}")]
    InvalidCalibration(String),
    #[error("critical sections overlapped {0} times")]
    ExclusionViolated(u64),
    #[error("configuration: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Parse(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CalibrateError {
    /// Failures caused by the machine rather than by the caller's input.
    pub fn is_hardware(&self) -> bool {
        matches!(
            self,
            CalibrateError::InsufficientCores { .. }
                | CalibrateError::TimerResolution { .. }
                | CalibrateError::InvalidCalibration(_)
                | CalibrateError::ExclusionViolated(_)
        )
    }
}
