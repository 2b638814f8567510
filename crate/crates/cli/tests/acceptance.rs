//! Acceptance suite. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.
//!
//! The hardware criterion runs only when `MCSPERF_HW_ACCEPTANCE=1` is set
//! on an x86_64 machine with at least eight physical cores.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};

use mcsperf_calibrate::topology::pin_plan;
use mcsperf_calibrate::{calibrate, run_mcs_benchmark, validate, BenchOptions, CalibrationOptions};
use mcsperf_core::sim::{BlockKind, Section};
use mcsperf_core::{
    classify_regime, estimate_alpha, extract_schedule, predict, simulate, simulate_parallel_only,
    throughput_contended, throughput_free, transition_window, MachineConstants, Regime, SimOptions,
    SimResult, Workload,
};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn intel() -> MachineConstants {
    MachineConstants::intel_xeon_gold_6230()
}

// Written out again from the cost walkthrough rather than calling into the
// model, so the two evaluations are independent.
struct Rederived {
    alpha: f64,
    w: f64,
    ri: f64,
    rm: f64,
}

impl Rederived {
    fn handoff(&self, c: f64) -> f64 {
        c + self.ri + self.w + self.ri
    }
    fn contended(&self, c: f64) -> f64 {
        self.alpha / self.handoff(c)
    }
    fn free(&self, n: usize, c: f64, p: f64) -> f64 {
        let own_op = self.w + self.w + self.w + c + self.rm + self.w + p;
        n as f64 * self.alpha / own_op
    }
    /// Queue never drains: the other n-1 hand-offs outlast a process's
    /// trip from unlock back to its link write.
    fn is_contended(&self, n: usize, c: f64, p: f64) -> bool {
        (n - 1) as f64 * self.handoff(c) >= p + 4.0 * self.w
    }
    fn is_free(&self, n: usize, c: f64, p: f64) -> bool {
        p + 2.0 * self.w + self.rm >= (n - 1) as f64 * self.handoff(c) + self.ri
    }
}

fn closed_form() -> Check {
    let m = intel();
    let re = Rederived { alpha: 4.04e5, w: 15.0, ri: 30.0, rm: 15.0 };
    let cont = predict(&m, &Workload::new(15, 1000.0, 1000.0).unwrap());
    ensure(cont.regime == Regime::Contended, || format!("P=1000 classified {}", cont.regime))?;
    ensure(rel(cont.throughput, 4.04e5 / 1075.0) <= 1e-9, || format!("contended {}", cont.throughput))?;
    ensure(re.is_contended(15, 1000.0, 1000.0) && !re.is_free(15, 1000.0, 1000.0), || "re-derived regime".into())?;
    ensure(rel(cont.throughput, re.contended(1000.0)) <= 1e-9, || "contended disagrees with re-derivation".into())?;

    let free = predict(&m, &Workload::new(15, 1000.0, 100000.0).unwrap());
    ensure(free.regime == Regime::Free, || format!("P=100000 classified {}", free.regime))?;
    ensure(rel(free.throughput, 6.06e6 / 101075.0) <= 1e-9, || format!("free {}", free.throughput))?;
    ensure(re.is_free(15, 1000.0, 100000.0), || "re-derived regime".into())?;
    ensure(rel(free.throughput, re.free(15, 1000.0, 100000.0)) <= 1e-9, || "free disagrees with re-derivation".into())?;

    // The re-derivation agrees on regime and pure-regime value over a grid.
    for n in [1, 2, 5, 10, 15, 32] {
        for c in [0.0, 500.0, 1000.0, 5000.0, 10000.0, 50000.0] {
            for p in [0.0, 100.0, 1e3, 1e4, 1e5, 1e6] {
                let pr = predict(&m, &Workload::new(n, c, p).unwrap());
                let (is_free, is_cont) = (re.is_free(n, c, p), re.is_contended(n, c, p));
                let expect = if is_free { re.free(n, c, p) } else if is_cont { re.contended(c) } else { continue };
                ensure(rel(pr.throughput, expect) <= 1e-9, || format!("n={n} c={c} p={p}: {} vs {expect}", pr.throughput))?;
            }
        }
    }
    Ok(format!("contended {:.6}, free {:.6}", cont.throughput, free.throughput))
}

fn transition() -> Check {
    let m = intel();
    let (lo, hi) = transition_window(&m, 15, 1000.0);
    ensure((lo, hi) == (14990.0, 15035.0), || format!("window ({lo}, {hi})"))?;
    let at = |p: f64| predict(&m, &Workload::new(15, 1000.0, p).unwrap()).throughput;
    let eps = 1e-6;
    let left = rel(at(lo - eps), at(lo + eps));
    let right = rel(at(hi - eps), at(hi + eps));
    ensure(left <= 1e-9, || format!("jump at p_low: {left:e}"))?;
    ensure(right <= 1e-9, || format!("jump at p_high: {right:e}"))?;
    ensure(rel(at(lo), throughput_contended(&m, 1000.0)) <= 1e-9, || "p_low value".into())?;
    ensure(
        rel(at(hi), throughput_free(&m, &Workload::new(15, 1000.0, hi).unwrap())) <= 1e-9,
        || "p_high value".into(),
    )?;
    Ok(format!("({lo}, {hi}), edge jumps {left:.1e} / {right:.1e}"))
}

struct GridRun {
    n: usize,
    c: f64,
    p: f64,
    regime: Regime,
    predicted: f64,
    result: SimResult,
}

fn oracle_grid() -> Vec<GridRun> {
    let m = intel();
    let mut runs = Vec::new();
    for regime in [Regime::Contended, Regime::Free] {
        for n in [2, 4, 8, 15] {
            for c in [100.0, 1000.0, 10000.0] {
                let (lo, hi) = transition_window(&m, n, c);
                let p = if regime == Regime::Contended { 0.5 * lo } else { 3.0 * hi };
                let wl = Workload::new(n, c, p).unwrap();
                let predicted = match regime {
                    Regime::Contended => throughput_contended(&m, c),
                    _ => throughput_free(&m, &wl),
                };
                let result = simulate(&m, &wl, &SimOptions::for_workload(&wl).with_trace(true)).unwrap();
                runs.push(GridRun { n, c, p, regime, predicted, result });
            }
        }
    }
    runs
}

fn golden_round(m: &MachineConstants, regime: Regime, c: f64, p: f64) -> Vec<(BlockKind, f64)> {
    use BlockKind::*;
    let (crit, par) = (LocalWork(Section::Critical), LocalWork(Section::Parallel));
    match regime {
        Regime::Contended => vec![
            (Write, m.w),
            (Write, m.w),
            (Swap, m.w),
            (Write, m.w),
            (SpinRead, m.r_invalid),
            (crit, c),
            (Read, m.r_invalid),
            (Write, m.w),
            (par, p),
        ],
        _ => vec![(Write, m.w), (Write, m.w), (Swap, m.w), (crit, c), (Read, m.r_modified), (Cas, m.w), (par, p)],
    }
}

fn simulator_oracle(runs: &[GridRun]) -> Check {
    let m = intel();
    let mut worst: f64 = 0.0;
    let mut rounds_checked = 0;
    for regime in [Regime::Contended, Regime::Free] {
        let count = runs.iter().filter(|r| r.regime == regime).count();
        ensure(count >= 12, || format!("only {count} {regime} points"))?;
    }
    for r in runs {
        let e = rel(r.result.throughput, r.predicted);
        worst = worst.max(e);
        ensure(e <= 0.03, || {
            format!("{} n={} c={} p={}: simulated {} vs {}", r.regime, r.n, r.c, r.p, r.result.throughput, r.predicted)
        })?;
        let golden = golden_round(&m, r.regime, r.c, r.p);
        for proc in 0..r.n {
            for round in 2..5 {
                let got = extract_schedule(&r.result, proc, round).map_err(|e| e.to_string())?;
                ensure(got == golden, || {
                    format!("{} n={} c={} proc={proc} round={round}: {got:?}", r.regime, r.n, r.c)
                })?;
                rounds_checked += 1;
            }
        }
    }
    Ok(format!("{} points, max rel err {worst:.2e}, {rounds_checked} golden rounds", runs.len()))
}

fn regime_observability(runs: &[GridRun]) -> Check {
    let (mut min_free, mut max_cont) = (1.0f64, 0.0f64);
    for r in runs {
        let t = r.result.tail_null_fraction;
        match r.regime {
            Regime::Free => min_free = min_free.min(t),
            _ => max_cont = max_cont.max(t),
        }
    }
    ensure(min_free >= 0.99, || format!("free tail-null fraction {min_free}"))?;
    ensure(max_cont <= 0.01, || format!("contended tail-null fraction {max_cont}"))?;
    Ok(format!("free >= {min_free}, contended <= {max_cont}"))
}

fn constants() -> impl Strategy<Value = MachineConstants> {
    (1e2f64..1e7, 1.0f64..50.0, 0.0f64..60.0, 0.05f64..=1.0, 0.0f64..40.0).prop_map(
        |(alpha, w, extra_ri, rm_frac, extra_x)| {
            let r_invalid = w + extra_ri;
            MachineConstants::with_contended(alpha, w, r_invalid, r_invalid * rm_frac, w + extra_x).unwrap()
        },
    )
}

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
}

fn property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn invariant_suites() -> Check {
    property("mutual exclusion and FIFO", 64, (constants(), 1usize..9, 0.0f64..500.0, 0.0f64..5000.0), |(m, n, c, p)| {
        let wl = Workload::new(n, c, p).unwrap();
        let opts = SimOptions { ops_target: 40 * n as u64, warmup_ops: 2 * n as u64, trace: true };
        let r = simulate(&m, &wl, &opts).unwrap();
        prop_assert_eq!(r.mutex_violations, 0);
        let trace = r.trace.as_ref().unwrap();
        let crit = BlockKind::LocalWork(Section::Critical);
        let cs: Vec<_> = trace.iter().filter(|e| e.kind == crit).collect();
        for pair in cs.windows(2) {
            prop_assert!(pair[1].tick >= pair[0].tick + pair[0].cost);
        }
        let mut swaps: Vec<_> = trace.iter().filter(|e| e.kind == BlockKind::Swap).collect();
        swaps.sort_by(|a, b| a.tick.total_cmp(&b.tick).then(a.proc.cmp(&b.proc)));
        let swap_order: Vec<_> = swaps.iter().map(|e| (e.proc, e.round)).collect();
        let cs_order: Vec<_> = cs.iter().map(|e| (e.proc, e.round)).collect();
        prop_assert_eq!(&swap_order[..cs_order.len()], &cs_order[..]);
        Ok(())
    })?;
    property("determinism", 32, (constants(), 1usize..9, 0.0f64..500.0, 0.0f64..5000.0), |(m, n, c, p)| {
        let wl = Workload::new(n, c, p).unwrap();
        let opts = SimOptions { ops_target: 30 * n as u64, warmup_ops: 2 * n as u64, trace: true };
        let a = simulate(&m, &wl, &opts).unwrap();
        let b = simulate(&m, &wl, &opts).unwrap();
        prop_assert_eq!(a.trace_text().unwrap().into_bytes(), b.trace_text().unwrap().into_bytes());
        prop_assert_eq!(a, b);
        Ok(())
    })?;
    property("alpha round trip", 256, (constants(), 1usize..64, 1.0f64..1e5, 1u64..10_000), |(m, n, p, ops)| {
        let (f, t) = simulate_parallel_only(&m, n, p, ops).unwrap();
        prop_assert!(rel(estimate_alpha(p, f as f64, t, n).unwrap(), m.alpha) < 1e-9);
        Ok(())
    })?;
    let flat = (constants(), 0.0f64..1e5, 2usize..64, 2usize..64, 0.0f64..1.0, 0.0f64..1.0);
    property("contended flatness", 256, flat, |(m, c, n1, n2, f1, f2)| {
        let t = throughput_contended(&m, c);
        for (n, f) in [(n1, f1), (n2, f2)] {
            let (lo, _) = transition_window(&m, n, c);
            if lo > 0.0 {
                let wl = Workload::new(n, c, lo * f).unwrap();
                prop_assert_eq!(classify_regime(&m, &wl), Regime::Contended);
                prop_assert_eq!(predict(&m, &wl).throughput, t);
            }
        }
        Ok(())
    })?;
    let mono = (constants(), 1usize..63, 0.0f64..1e5, 0.0f64..1e6, 1.0f64..1e4);
    property("free monotonicity", 256, mono, |(m, n, c, p, dp)| {
        let wl = Workload::new(n, c, p).unwrap();
        let t = throughput_free(&m, &wl);
        prop_assert!(throughput_free(&m, &wl.with_p(p + dp)) < t);
        prop_assert!(throughput_free(&m, &Workload::new(n + 1, c, p).unwrap()) > t);
        let (_, hi) = transition_window(&m, n, c);
        let a = predict(&m, &wl.with_p(hi + p));
        let b = predict(&m, &wl.with_p(hi + p + dp));
        prop_assert!(a.regime == Regime::Free && b.throughput < a.throughput);
        Ok(())
    })?;
    let scale = (constants(), 1usize..32, 0.0f64..1e5, 0.0f64..1e6, 0.01f64..100.0);
    property("scale covariance", 256, scale, |(m, n, c, p, k)| {
        let wl = Workload::new(n, c, p).unwrap();
        let scaled = MachineConstants {
            alpha: m.alpha * k,
            w: m.w * k,
            r_invalid: m.r_invalid * k,
            r_modified: m.r_modified * k,
            x_contended: m.x_contended * k,
        };
        let a = predict(&m, &wl);
        let b = predict(&scaled, &Workload::new(n, c * k, p * k).unwrap());
        prop_assert_eq!(a.regime, b.regime);
        prop_assert!(rel(b.throughput, a.throughput) < 1e-9);
        let faster = MachineConstants { alpha: m.alpha * k, ..m };
        prop_assert!(rel(predict(&faster, &wl).throughput, k * a.throughput) < 1e-12);
        Ok(())
    })?;
    Ok("7 properties over randomized constants with r_invalid >= w".into())
}

fn hardware_gate() -> Result<Vec<usize>, String> {
    if std::env::var("MCSPERF_HW_ACCEPTANCE").as_deref() != Ok("1") {
        return Err("MCSPERF_HW_ACCEPTANCE=1 not set".into());
    }
    if !cfg!(target_arch = "x86_64") {
        return Err(format!("needs x86_64, running on {}", std::env::consts::ARCH));
    }
    let plan = pin_plan(false).map_err(|e| e.to_string())?;
    if plan.len() < 8 {
        return Err(format!("needs >= 8 physical cores, found {}", plan.len()));
    }
    Ok(plan)
}

fn hardware_validation(plan: Vec<usize>) -> Check {
    let report = calibrate(&CalibrationOptions::default()).map_err(|e| e.to_string())?;
    let m = report.constants().map_err(|e| e.to_string())?;
    let cores = plan.len();
    let opts = BenchOptions::default();
    let ps: Vec<f64> = (0..10).map(|i| (100.0 * 10f64.powf(i as f64 * 4.0 / 9.0)).round()).collect();
    let mut records = Vec::new();
    let mut shape_failures = Vec::new();
    for n in [5, 10, cores.min(15)] {
        for c in [500.0, 1000.0, 5000.0, 10000.0, 50000.0] {
            let mut curve = Vec::new();
            for &p in &ps {
                let rec = run_mcs_benchmark(&Workload::new(n, c, p).unwrap(), &opts).map_err(|e| e.to_string())?;
                curve.push((p, rec.throughput));
                records.push(rec);
            }
            let (lo, _) = transition_window(&m, n, c);
            let plateau: Vec<f64> = curve.iter().filter(|(p, _)| *p <= lo).map(|&(_, t)| t).collect();
            let flat = plateau.len() < 2 || {
                let (min, max) = plateau.iter().fold((f64::MAX, 0.0f64), |(a, b), &t| (a.min(t), b.max(t)));
                max / min <= 1.25
            };
            let decays = curve.last().unwrap().1 < 0.9 * curve[0].1;
            if !(flat && decays) {
                shape_failures.push(format!("n={n} c={c}"));
            }
        }
    }
    let errors = validate(&m, &records).map_err(|e| e.to_string())?;
    ensure(errors.median <= 0.15, || format!("median relative error {:.3}", errors.median))?;
    ensure(shape_failures.is_empty(), || format!("curve shape off at {}", shape_failures.join(", ")))?;
    Ok(format!("{} points, median {:.3}, max {:.3}", records.len(), errors.median, errors.max))
}

fn run(check: impl FnOnce() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(detail)) => Outcome::Pass(detail),
        Ok(Err(why)) => Outcome::Fail(why),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Outcome::Fail(msg)
        }
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let grid_start = Instant::now();
    let grid = oracle_grid();
    let grid_time = grid_start.elapsed();

    let hardware = match hardware_gate() {
        Ok(plan) => run(|| hardware_validation(plan)),
        Err(reason) => Outcome::Skip(reason),
    };
    let results = [
        ("closed-form correctness", run(closed_form)),
        ("transition window and continuity", run(transition)),
        ("simulator as oracle with golden schedules", run(|| {
            let detail = simulator_oracle(&grid)?;
            ensure(grid_time < Duration::from_secs(60), || format!("grid took {grid_time:?}"))?;
            Ok(format!("{detail}, {:.1}s", grid_time.as_secs_f64()))
        })),
        ("regime observability", run(|| regime_observability(&grid))),
        ("invariant suites", run(invariant_suites)),
        ("hardware validation", hardware),
    ];

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Outcome::Pass(d) => println!("PASS  {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
            Outcome::Skip(d) => println!("SKIP  {name}: {d}"),
        }
    }
    println!("{} criteria, {failed} failed, {:.1}s", results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
