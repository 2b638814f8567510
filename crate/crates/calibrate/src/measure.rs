//! Microbenchmarks for the machine constants.

use std::hint::black_box;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use crossbeam_utils::CachePadded;
use mcsperf_core::estimate_alpha;

use crate::topology::{pin_current_thread, require_cores};
use crate::work::{check_timer, spin_work};
use crate::CalibrateError;

/// Share of each measured run discarded before counting starts.
pub const WARMUP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSample {
    /// Loop iterations per second per stream.
    pub alpha: f64,
    pub completed_ops: u64,
    pub elapsed: Duration,
}

/// Line costs in work units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCosts {
    pub w: f64,
    pub r_invalid: f64,
    pub r_modified: f64,
}

/// Runs `n` pinned streams doing only the parallel loop of `p` iterations
/// and returns `p * F / (T * n)`.
pub fn measure_alpha(
    p: u64,
    n: usize,
    duration: Duration,
    plan: &[usize],
) -> Result<AlphaSample, CalibrateError> {
    if p == 0 || n == 0 {
        return Err(CalibrateError::Config(format!("alpha needs p > 0 and n > 0 (p={p}, n={n})")));
    }
    if duration.is_zero() {
        return Err(CalibrateError::Config("measurement duration must be > 0".into()));
    }
    let cores = require_cores(plan, n)?;
    check_timer(duration)?;

    let counters: Vec<CachePadded<AtomicU64>> = (0..n).map(|_| CachePadded::new(AtomicU64::new(0))).collect();
    let stop = AtomicBool::new(false);
    let start = Barrier::new(n + 1);

    let (ops, elapsed) = std::thread::scope(|s| {
        for (i, &cpu) in cores.iter().enumerate() {
            let (counter, stop, start) = (&counters[i], &stop, &start);
            s.spawn(move || {
                pin_current_thread(cpu);
                start.wait();
                let mut done = 0u64;
                while !stop.load(Ordering::Relaxed) {
                    spin_work(p);
                    done += 1;
                    counter.store(done, Ordering::Relaxed);
                }
            });
        }
        start.wait();
        let window = timed_window(duration, &counters);
        stop.store(true, Ordering::Relaxed);
        window
    });
    let seconds = elapsed.as_secs_f64();
    let alpha = estimate_alpha(p as f64, ops as f64, seconds, n)?;
    Ok(AlphaSample { alpha, completed_ops: ops, elapsed })
}

/// Sleeps through the warm-up share, then counts completions over the rest.
pub(crate) fn timed_window(duration: Duration, counters: &[CachePadded<AtomicU64>]) -> (u64, Duration) {
    let total = |c: &[CachePadded<AtomicU64>]| c.iter().map(|x| x.load(Ordering::Relaxed)).sum::<u64>();
    std::thread::sleep(duration.mul_f64(WARMUP_FRACTION));
    let before = total(counters);
    let t0 = Instant::now();
    std::thread::sleep(duration.mul_f64(1.0 - WARMUP_FRACTION));
    let after = total(counters);
    (after - before, t0.elapsed())
}

fn ns_per_iter(rounds: u64, mut body: impl FnMut(u64)) -> f64 {
    let start = Instant::now();
    for i in 0..rounds {
        body(i);
    }
    start.elapsed().as_secs_f64() * 1e9 / rounds as f64
}

/// Nanoseconds per write and per read-after-own-write on a line this core
/// holds, with loop overhead removed. Single core.
pub fn measure_local_ns(rounds: u64) -> (f64, f64) {
    let line = CachePadded::new(AtomicU64::new(0));
    let empty = ns_per_iter(rounds, |i| {
        black_box(i);
    });
    let store = ns_per_iter(rounds, |i| line.store(black_box(i), Ordering::SeqCst));
    let store_load = ns_per_iter(rounds, |i| {
        line.store(black_box(i), Ordering::SeqCst);
        black_box(line.load(Ordering::Acquire));
    });
    ((store - empty).max(0.0), (store_load - store).max(0.0))
}

/// Nanoseconds for one read of a line another core just wrote: half a
/// ping-pong round trip minus the write that hands the line back.
pub fn measure_invalid_read_ns(rounds: u64, plan: &[usize], write_ns: f64) -> Result<f64, CalibrateError> {
    let cores = require_cores(plan, 2)?;
    let flag = CachePadded::new(AtomicU64::new(0));
    let ready = Barrier::new(2);
    let elapsed = std::thread::scope(|s| {
        let (flag_b, ready_b, cpu_b) = (&flag, &ready, cores[1]);
        s.spawn(move || {
            pin_current_thread(cpu_b);
            ready_b.wait();
            for i in 0..rounds {
                while flag_b.load(Ordering::Acquire) != 2 * i + 1 {
                    std::hint::spin_loop();
                }
                flag_b.store(2 * i + 2, Ordering::SeqCst);
            }
        });
        let (flag_a, cpu_a) = (&flag, cores[0]);
        let ready_a = &ready;
        let initiator = s.spawn(move || {
            pin_current_thread(cpu_a);
            ready_a.wait();
            let start = Instant::now();
            for i in 0..rounds {
                flag_a.store(2 * i + 1, Ordering::SeqCst);
                while flag_a.load(Ordering::Acquire) != 2 * i + 2 {
                    std::hint::spin_loop();
                }
            }
            start.elapsed()
        });
        initiator.join().expect("ping-pong initiator panicked")
    });
    let half_trip = elapsed.as_secs_f64() * 1e9 / rounds as f64 / 2.0;
    Ok((half_trip - write_ns).max(0.0))
}

/// Measures `(w, r_invalid, r_modified)` in work units for a machine whose
/// streams run `alpha` iterations per second. Needs two cores.
///
/// A read is never cheaper than one loop iteration, so `r_modified` is
/// floored at one work unit.
pub fn measure_line_costs(rounds: u64, alpha: f64, plan: &[usize]) -> Result<LineCosts, CalibrateError> {
    if rounds == 0 {
        return Err(CalibrateError::Config("rounds must be > 0".into()));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(CalibrateError::Config(format!("alpha must be > 0, got {alpha}")));
    }
    require_cores(plan, 2)?;
    let (w_ns, rm_ns) = measure_local_ns(rounds);
    let ri_ns = measure_invalid_read_ns(rounds, plan, w_ns)?;
    let units = alpha / 1e9;
    let costs = LineCosts { w: w_ns * units, r_invalid: ri_ns * units, r_modified: (rm_ns * units).max(1.0) };
    if costs.w <= 0.0 {
        return Err(CalibrateError::InvalidCalibration(format!("write cost measured as {} units", costs.w)));
    }
    if costs.r_invalid < costs.w {
        return Err(CalibrateError::InvalidCalibration(format!(
            "r_invalid ({:.2}) < w ({:.2})",
            costs.r_invalid, costs.w
        )));
    }
    Ok(costs)
}
