//! The work unit: one iteration of an empty counted loop.

use std::hint::black_box;
use std::time::{Duration, Instant};

use crate::CalibrateError;

#[inline(never)]
pub fn spin_work(iterations: u64) {
    for i in 0..iterations {
        black_box(i);
    }
}

/// Smallest positive step observed between consecutive `Instant` reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    let mut prev = Instant::now();
    let mut seen = 0;
    while seen < 200 {
        let now = Instant::now();
        let d = now.duration_since(prev);
        if !d.is_zero() {
            best = best.min(d);
            seen += 1;
        }
        prev = now;
    }
    best
}

/// Timer steps must stay below 0.1% of the measured interval.
pub fn check_timer(duration: Duration) -> Result<Duration, CalibrateError> {
    let res = timer_resolution();
    if res.as_secs_f64() > 1e-3 * duration.as_secs_f64() {
        return Err(CalibrateError::TimerResolution {
            resolution_ns: res.as_secs_f64() * 1e9,
            duration_s: duration.as_secs_f64(),
        });
    }
    Ok(res)
}
