use mcsperf_core::{predict, MachineConstants, Workload};

use crate::{CalibrateError, MeasurementRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct PointError {
    pub n: usize,
    pub c: f64,
    pub p: f64,
    pub measured: f64,
    pub predicted: f64,
    /// `|measured - predicted| / predicted`
    pub rel_err: f64,
}

impl PointError {
    pub fn new(n: usize, c: f64, p: f64, measured: f64, predicted: f64) -> Self {
        Self { n, c, p, measured, predicted, rel_err: ((measured - predicted) / predicted).abs() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub points: Vec<PointError>,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(points: Vec<PointError>) -> Result<ErrorReport, CalibrateError> {
    if points.is_empty() {
        return Err(CalibrateError::EmptyInput("measurements"));
    }
    let mut errs: Vec<f64> = points.iter().map(|p| p.rel_err).collect();
    errs.sort_by(f64::total_cmp);
    let mid = errs.len() / 2;
    let median = if errs.len().is_multiple_of(2) { (errs[mid - 1] + errs[mid]) / 2.0 } else { errs[mid] };
    let max = *errs.last().expect("non-empty");
    Ok(ErrorReport { points, median, max })
}

/// Compares each measurement against the closed-form prediction for the
/// same `(n, c, p)`.
pub fn validate(m: &MachineConstants, records: &[MeasurementRecord]) -> Result<ErrorReport, CalibrateError> {
    m.validate()?;
    let points = records
        .iter()
        .map(|r| {
            if !(r.throughput >= 0.0 && r.throughput.is_finite()) {
                return Err(CalibrateError::Config(format!(
                    "measured throughput must be finite and >= 0 at n={} c={} p={}",
                    r.n, r.c, r.p
                )));
            }
            let wl = Workload::new(r.n, r.c, r.p)?;
            Ok(PointError::new(r.n, r.c, r.p, r.throughput, predict(m, &wl).throughput))
        })
        .collect::<Result<Vec<_>, _>>()?;
    summarize(points)
}
