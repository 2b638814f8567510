//! Runs on whatever machine executes the tests, so only single-stream
//! checks live here.

use std::time::Duration;

use mcsperf_calibrate::measure::measure_local_ns;
use mcsperf_calibrate::topology::pin_plan;
use mcsperf_calibrate::{
    measure_alpha, run_mcs_benchmark, BenchOptions, CalibrationReport, Environment, Stat,
};
use mcsperf_core::{predict, MachineConstants, Regime, Workload};

#[test]
fn single_stream_benchmark_matches_prediction() {
    let plan = pin_plan(false).unwrap();
    let alpha = measure_alpha(10_000, 1, Duration::from_millis(500), &plan).unwrap().alpha;
    let (w_ns, rm_ns) = measure_local_ns(1_000_000);
    let units = alpha / 1e9;
    let w = (w_ns * units).max(1e-3);
    let r_modified = (rm_ns * units).max(1.0);
    let m = MachineConstants::new(alpha, w, w.max(r_modified), r_modified).unwrap();

    let wl = Workload::new(1, 0.0, 10_000.0).unwrap();
    let opts = BenchOptions { duration: Duration::from_millis(500), ..Default::default() };
    let rec = run_mcs_benchmark(&wl, &opts).unwrap();
    let pred = predict(&m, &wl);
    assert_eq!(pred.regime, Regime::Free);
    let err = (rec.throughput - pred.throughput).abs() / pred.throughput;
    assert!(err <= 0.20, "measured {} vs predicted {} ({:.1}%)", rec.throughput, pred.throughput, err * 100.0);
    assert_eq!(rec.tail_null_fraction, Some(1.0));
}

#[test]
fn report_file_round_trip() {
    let stat = |mean: f64| Stat { samples: 5, mean, std: 0.125 };
    let report = CalibrationReport {
        alpha: stat(4.04e5),
        w: stat(15.0),
        r_invalid: stat(30.0),
        r_modified: stat(15.0),
        environment: Environment { cores: 16, pinning: (0..16).collect(), timer_resolution_ns: 30.0 },
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("machine.txt");
    report.write_to(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back = CalibrationReport::parse(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.constants().unwrap(), MachineConstants::intel_xeon_gold_6230());
    assert!(report.write_to(&dir.path().join("missing/dir/x.txt")).is_err());
}
