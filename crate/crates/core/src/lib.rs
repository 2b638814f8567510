//! Throughput prediction for a coarse-grained operation guarded by an MCS
//! queue lock.
//!
//! Two independent routes to the same number live here:
//!
//! * [`model`] evaluates the closed-form piecewise predictor (a contended
//!   plateau, a free-lock decay, and a linear bridge between them).
//! * [`sim`] runs the MCS acquire/release sequence on a deterministic
//!   abstract machine with MESI-priced accesses and reports the throughput
//!   it observes.
//!
//! Both express throughput in operations per time unit, where one process
//! completes `alpha` work units per time unit.

pub mod error;
pub mod model;
pub mod sim;

pub use error::{ModelError, SimError};
pub use model::{
    classify_regime, estimate_alpha, predict, sweep, throughput_contended, throughput_free,
    transition_window, MachineConstants, Prediction, Regime, Workload,
};
pub use sim::{extract_schedule, simulate, simulate_parallel_only, SimOptions, SimResult};
