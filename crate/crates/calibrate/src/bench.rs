//! Native run of the MCS-locked coarse-grained operation.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::Duration;

use crossbeam_utils::CachePadded;
use mcsperf_core::Workload;

use crate::lock::{McsLock, OwnerStamp};
use crate::measure::timed_window;
use crate::topology::{pin_current_thread, pin_plan, require_cores};
use crate::work::{check_timer, spin_work};
use crate::CalibrateError;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub duration: Duration,
    /// Runs shorter than this are rejected.
    pub min_duration: Duration,
    /// Stamp an owner word on critical-section entry and exit.
    pub verify_exclusion: bool,
    /// CPUs to pin to; discovered when `None`.
    pub cores: Option<Vec<usize>>,
    pub allow_cross_socket: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            duration: Duration::from_secs(2),
            min_duration: Duration::from_millis(10),
            verify_exclusion: true,
            cores: None,
            allow_cross_socket: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub n: usize,
    pub c: f64,
    pub p: f64,
    /// Length of the counted window in seconds.
    pub duration: f64,
    pub completed_ops: u64,
    /// Operations per second.
    pub throughput: f64,
    /// Share of counted acquisitions that found the tail null.
    pub tail_null_fraction: Option<f64>,
}

/// Runs the operation on `wl.n` pinned streams for `opts.duration` and
/// counts completions after the warm-up share.
pub fn run_mcs_benchmark(wl: &Workload, opts: &BenchOptions) -> Result<MeasurementRecord, CalibrateError> {
    wl.validate()?;
    if opts.duration.is_zero() || opts.duration < opts.min_duration {
        return Err(CalibrateError::Config(format!(
            "duration {:?} is below the minimum {:?}",
            opts.duration, opts.min_duration
        )));
    }
    let plan = match &opts.cores {
        Some(c) => c.clone(),
        None => pin_plan(opts.allow_cross_socket)?,
    };
    let cores = require_cores(&plan, wl.n)?;
    check_timer(opts.duration)?;

    let n = wl.n;
    let (c_iters, p_iters) = (wl.c.round() as u64, wl.p.round() as u64);
    let lock = McsLock::new(n);
    let stamp = OwnerStamp::new();
    let ops: Vec<CachePadded<AtomicU64>> = (0..n).map(|_| CachePadded::new(AtomicU64::new(0))).collect();
    let free: Vec<CachePadded<AtomicU64>> = (0..n).map(|_| CachePadded::new(AtomicU64::new(0))).collect();
    let stop = AtomicBool::new(false);
    let start = Barrier::new(n + 1);
    let verify = opts.verify_exclusion;

    let ((completed, elapsed), free_in_window) = std::thread::scope(|s| {
        for (id, &cpu) in cores.iter().enumerate() {
            let (lock, stamp, ops, free, stop, start) = (&lock, &stamp, &ops[id], &free[id], &stop, &start);
            s.spawn(move || {
                pin_current_thread(cpu);
                start.wait();
                let (mut done, mut found_free) = (0u64, 0u64);
                while !stop.load(Ordering::Relaxed) {
                    {
                        let guard = lock.lock(id);
                        if verify {
                            stamp.enter(id);
                        }
                        spin_work(c_iters);
                        if verify {
                            stamp.exit(id);
                        }
                        found_free += guard.found_free() as u64;
                    }
                    spin_work(p_iters);
                    done += 1;
                    free.store(found_free, Ordering::Relaxed);
                    ops.store(done, Ordering::Relaxed);
                }
            });
        }
        start.wait();
        let free_before: u64 = free.iter().map(|f| f.load(Ordering::Relaxed)).sum();
        let window = timed_window(opts.duration, &ops);
        let free_after: u64 = free.iter().map(|f| f.load(Ordering::Relaxed)).sum();
        stop.store(true, Ordering::Relaxed);
        (window, free_after.saturating_sub(free_before))
    });

    if stamp.violations() > 0 {
        return Err(CalibrateError::ExclusionViolated(stamp.violations()));
    }
    let seconds = elapsed.as_secs_f64();
    Ok(MeasurementRecord {
        n,
        c: wl.c,
        p: wl.p,
        duration: seconds,
        completed_ops: completed,
        throughput: completed as f64 / seconds,
        tail_null_fraction: (completed > 0).then(|| (free_in_window as f64 / completed as f64).min(1.0)),
    })
}
