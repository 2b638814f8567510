//! Hardware side of the model: measure the machine constants and run the
//! MCS-locked operation natively so its throughput can be compared with
//! the prediction.
//!
//! All throughputs here are in operations per second and `alpha` is in
//! loop iterations per second per stream, so predictions made from a
//! [`CalibrationReport`] are directly comparable with [`MeasurementRecord`]s.

mod error;
pub mod bench;
pub mod lock;
pub mod measure;
pub mod report;
pub mod topology;
pub mod validate;
pub mod work;

pub use bench::{run_mcs_benchmark, BenchOptions, MeasurementRecord};
pub use error::CalibrateError;
pub use lock::{McsLock, OwnerStamp};
pub use measure::{measure_alpha, measure_line_costs, AlphaSample, LineCosts};
pub use report::{calibrate, constants_from_kv, CalibrationOptions, CalibrationReport, Environment, Stat};
pub use validate::{summarize, validate, ErrorReport, PointError};
