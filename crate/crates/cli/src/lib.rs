//! Library side of the `mcsperf` binary, exposed so the commands can be
//! driven from tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod rows;

pub use commands::{cmd_bench, cmd_predict, cmd_run, cmd_simulate, compare_rows, format_report};
pub use config::{ExperimentConfig, Mode, Preset, Scale};
pub use error::CliError;
pub use rows::{read_rows, write_rows, Row, Source, HEADER};
