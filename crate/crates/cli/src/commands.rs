use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use mcsperf_calibrate::validate::summarize;
use mcsperf_calibrate::{run_mcs_benchmark, BenchOptions, ErrorReport, PointError};
use mcsperf_core::{predict, simulate, SimOptions, Workload};

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;
use crate::rows::{Row, Source};

pub fn cmd_predict(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    let m = cfg.machine_constants()?;
    let grid = cfg.grid()?;
    Ok(grid
        .iter()
        .map(|wl| {
            let pred = predict(&m, wl);
            Row {
                n: wl.n,
                c: wl.c,
                p: wl.p,
                source: Source::Predicted,
                regime: Some(pred.regime),
                throughput: pred.throughput,
                tail_null_fraction: None,
            }
        })
        .collect())
}

fn sim_options(cfg: &ExperimentConfig, wl: &Workload) -> SimOptions {
    let base = SimOptions::for_workload(wl);
    SimOptions {
        ops_target: cfg.ops_target.unwrap_or(base.ops_target),
        warmup_ops: cfg.warmup.unwrap_or(base.warmup_ops),
        trace: cfg.trace.unwrap_or(false),
    }
}

pub fn trace_file_name(wl: &Workload) -> String {
    format!("trace_n{}_c{}_p{}.txt", wl.n, wl.c, wl.p)
}

fn trace_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(d) = &cfg.trace_dir {
        return d.clone();
    }
    match cfg.output.as_deref().and_then(Path::parent) {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Simulates every grid point in parallel; rows keep grid order.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    let m = cfg.machine_constants()?;
    let grid = cfg.grid()?;
    let results = grid
        .par_iter()
        .map(|wl| simulate(&m, wl, &sim_options(cfg, wl)))
        .collect::<Result<Vec<_>, _>>()?;

    if cfg.trace.unwrap_or(false) {
        let dir = trace_dir(cfg);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        for (wl, r) in grid.iter().zip(&results) {
            let path = dir.join(trace_file_name(wl));
            let text = r.trace_text().expect("trace was requested");
            std::fs::write(&path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
            info!("wrote {}", path.display());
        }
    }
    Ok(grid
        .iter()
        .zip(results)
        .map(|(wl, r)| Row {
            n: wl.n,
            c: wl.c,
            p: wl.p,
            source: Source::Simulated,
            regime: None,
            throughput: r.throughput,
            tail_null_fraction: Some(r.tail_null_fraction),
        })
        .collect())
}

/// Runs the native benchmark at each grid point, one point at a time.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    let grid = cfg.grid()?;
    let opts = BenchOptions {
        duration: cfg.duration()?,
        allow_cross_socket: cfg.allow_cross_socket.unwrap_or(false),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(grid.len());
    for wl in &grid {
        let rec = run_mcs_benchmark(wl, &opts)?;
        info!("n={} c={} p={}: {:.1} ops/s", wl.n, wl.c, wl.p, rec.throughput);
        rows.push(Row {
            n: wl.n,
            c: wl.c,
            p: wl.p,
            source: Source::Measured,
            regime: None,
            throughput: rec.throughput,
            tail_null_fraction: rec.tail_null_fraction,
        });
    }
    Ok(rows)
}

/// Runs the configured mode. `all` runs each mode in turn and concatenates
/// the rows.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<Row>, CliError> {
    match cfg.mode.unwrap_or_default() {
        Mode::Predict => cmd_predict(cfg),
        Mode::Simulate => cmd_simulate(cfg),
        Mode::Bench => cmd_bench(cfg),
        Mode::All => {
            let mut rows = cmd_predict(cfg)?;
            rows.extend(cmd_simulate(cfg)?);
            rows.extend(cmd_bench(cfg)?);
            Ok(rows)
        }
    }
}

const REFERENCE_ORDER: [Source; 3] = [Source::Predicted, Source::Simulated, Source::Measured];
const OBSERVED_ORDER: [Source; 3] = [Source::Measured, Source::Simulated, Source::Predicted];

/// One row per key, taking the first source in `order` present for it.
fn pick(rows: &[Row], order: &[Source; 3], name: &str) -> Result<Vec<Row>, CliError> {
    let mut by_key: HashMap<(usize, u64, u64), Row> = HashMap::new();
    let mut keys = Vec::new();
    let rank = |s: Source| order.iter().position(|&o| o == s).expect("all sources ranked");
    for row in rows {
        match by_key.get(&row.key()) {
            None => {
                keys.push(row.key());
                by_key.insert(row.key(), row.clone());
            }
            Some(prev) if prev.source == row.source => {
                return Err(CliError::Schema(format!(
                    "{name}: duplicate {} row for n={} c={} p={}",
                    row.source, row.n, row.c, row.p
                )))
            }
            Some(prev) if rank(row.source) < rank(prev.source) => {
                by_key.insert(row.key(), row.clone());
            }
            Some(_) => {}
        }
    }
    Ok(keys.into_iter().map(|k| by_key.remove(&k).expect("key recorded")).collect())
}

/// Joins the two row sets on `(n, c, p)` and scores `observed` against
/// `reference`. Reference rows prefer predictions; observed rows prefer
/// measurements, then simulations.
pub fn compare_rows(reference: &[Row], observed: &[Row]) -> Result<ErrorReport, CliError> {
    let reference = pick(reference, &REFERENCE_ORDER, "predicted CSV")?;
    let observed = pick(observed, &OBSERVED_ORDER, "measured CSV")?;
    let refs: HashMap<_, _> = reference.iter().map(|r| (r.key(), r)).collect();
    let points: Vec<PointError> = observed
        .iter()
        .filter_map(|o| refs.get(&o.key()).map(|r| PointError::new(o.n, o.c, o.p, o.throughput, r.throughput)))
        .collect();
    if points.is_empty() {
        return Err(CliError::Schema("the two CSVs share no (n, c, p) points".into()));
    }
    Ok(summarize(points)?)
}

pub fn format_report(report: &ErrorReport) -> String {
    let mut out = String::new();
    for pt in &report.points {
        let _ = writeln!(
            out,
            "n={} c={} p={} predicted={} measured={} rel_err={:.6}",
            pt.n, pt.c, pt.p, pt.predicted, pt.measured, pt.rel_err
        );
    }
    let _ = writeln!(
        out,
        "points={} median_rel_err={:.6} max_rel_err={:.6}",
        report.points.len(),
        report.median,
        report.max
    );
    out
}
