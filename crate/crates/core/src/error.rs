use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid machine constants: {0}")]
    InvalidConstants(String),
    #[error("invalid workload: {0}")]
    InvalidWorkload(String),
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("simulator configuration: {0}")]
    Config(String),
    #[error("trace was not recorded for this run")]
    NoTrace,
    #[error("process {process} has no traced blocks for round {round}")]
    RoundNotTraced { process: usize, round: u64 },
    #[error("simulation stalled at tick {tick} with {completed} operations completed")]
    Stalled { tick: f64, completed: u64 },
}
