//! Calibration driver and its flat `key=value` report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use mcsperf_core::MachineConstants;

use crate::measure::{measure_alpha, measure_line_costs};
use crate::topology::{allowed_cpus, pin_plan, require_cores};
use crate::work::timer_resolution;
use crate::CalibrateError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Sample mean and (n-1) standard deviation.
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { samples: xs.len(), mean, std })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub cores: usize,
    pub pinning: Vec<usize>,
    pub timer_resolution_ns: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub alpha: Stat,
    pub w: Stat,
    pub r_invalid: Stat,
    pub r_modified: Stat,
    pub environment: Environment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    /// Parallel-loop length used for the alpha runs.
    pub alpha_p: u64,
    pub alpha_duration: Duration,
    /// Streams for the alpha runs; all planned cores when `None`.
    pub alpha_streams: Option<usize>,
    /// Accesses per line-cost microbenchmark.
    pub rounds: u64,
    /// Independent samples per constant.
    pub repeats: usize,
    pub cores: Option<Vec<usize>>,
    pub allow_cross_socket: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            alpha_p: 1000,
            alpha_duration: Duration::from_secs(2),
            alpha_streams: None,
            rounds: 1_000_000,
            repeats: 3,
            cores: None,
            allow_cross_socket: false,
        }
    }
}

/// Measures every constant `repeats` times and checks the result is a
/// usable model.
pub fn calibrate(opts: &CalibrationOptions) -> Result<CalibrationReport, CalibrateError> {
    if opts.repeats == 0 {
        return Err(CalibrateError::Config("repeats must be >= 1".into()));
    }
    let plan = match &opts.cores {
        Some(c) => c.clone(),
        None => pin_plan(opts.allow_cross_socket)?,
    };
    // The invalid-read ping-pong needs a second core; fail before the long runs.
    require_cores(&plan, 2)?;
    let streams = opts.alpha_streams.unwrap_or(plan.len());

    let mut alphas = Vec::with_capacity(opts.repeats);
    let (mut ws, mut ris, mut rms) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..opts.repeats {
        let a = measure_alpha(opts.alpha_p, streams, opts.alpha_duration, &plan)?;
        let costs = measure_line_costs(opts.rounds, a.alpha, &plan)?;
        alphas.push(a.alpha);
        ws.push(costs.w);
        ris.push(costs.r_invalid);
        rms.push(costs.r_modified);
    }
    let stat = |xs: &[f64]| Stat::from_samples(xs).expect("repeats >= 1");
    let report = CalibrationReport {
        alpha: stat(&alphas),
        w: stat(&ws),
        r_invalid: stat(&ris),
        r_modified: stat(&rms),
        environment: Environment {
            cores: allowed_cpus().len(),
            pinning: plan,
            timer_resolution_ns: timer_resolution().as_secs_f64() * 1e9,
        },
    };
    report.constants()?;
    Ok(report)
}

impl CalibrationReport {
    /// Model constants from the sample means; fails on an inconsistent
    /// machine (for example `r_invalid < w` or `r_invalid < r_modified`).
    pub fn constants(&self) -> Result<MachineConstants, CalibrateError> {
        MachineConstants::new(self.alpha.mean, self.w.mean, self.r_invalid.mean, self.r_modified.mean)
            .map_err(|e| CalibrateError::InvalidCalibration(format!("{e}; report: {self:?}")))
    }

    /// Constants whose means differ from `other` by more than `tolerance`
    /// relative.
    pub fn disagreements(&self, other: &Self, tolerance: f64) -> Vec<&'static str> {
        let pairs = [
            ("alpha", self.alpha.mean, other.alpha.mean),
            ("w", self.w.mean, other.w.mean),
            ("r_invalid", self.r_invalid.mean, other.r_invalid.mean),
            ("r_modified", self.r_modified.mean, other.r_modified.mean),
        ];
        pairs
            .into_iter()
            .filter(|(_, a, b)| ((a - b) / b).abs() > tolerance)
            .map(|(name, _, _)| name)
            .collect()
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::from("# mcsperf calibration report\n");
        let _ = writeln!(out, "alpha={}", self.alpha.mean);
        let _ = writeln!(out, "w={}", self.w.mean);
        let _ = writeln!(out, "r_invalid={}", self.r_invalid.mean);
        let _ = writeln!(out, "r_modified={}", self.r_modified.mean);
        let _ = writeln!(out, "x_contended={}", self.w.mean);
        for (name, s) in [("alpha", self.alpha), ("w", self.w), ("r_invalid", self.r_invalid), ("r_modified", self.r_modified)] {
            let _ = writeln!(out, "{name}_samples={}", s.samples);
            let _ = writeln!(out, "{name}_mean={}", s.mean);
            let _ = writeln!(out, "{name}_std={}", s.std);
        }
        let _ = writeln!(out, "cores={}", self.environment.cores);
        let pins: Vec<String> = self.environment.pinning.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(out, "pinning={}", pins.join(","));
        let _ = writeln!(out, "timer_resolution_ns={}", self.environment.timer_resolution_ns);
        out
    }

    pub fn parse(text: &str) -> Result<Self, CalibrateError> {
        let kv = parse_kv(text)?;
        let num = |k: &str| -> Result<f64, CalibrateError> {
            let v = kv.get(k).ok_or_else(|| CalibrateError::Parse(format!("missing key {k}")))?;
            v.parse().map_err(|_| CalibrateError::Parse(format!("{k}: not a number: {v:?}")))
        };
        let stat = |name: &str| -> Result<Stat, CalibrateError> {
            Ok(Stat {
                samples: num(&format!("{name}_samples"))? as usize,
                mean: num(&format!("{name}_mean")).or_else(|_| num(name))?,
                std: num(&format!("{name}_std"))?,
            })
        };
        let pinning = match kv.get("pinning").map(String::as_str) {
            None | Some("") => Vec::new(),
            Some(s) => s
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| CalibrateError::Parse(format!("pinning: bad id {t:?}"))))
                .collect::<Result<_, _>>()?,
        };
        Ok(Self {
            alpha: stat("alpha")?,
            w: stat("w")?,
            r_invalid: stat("r_invalid")?,
            r_modified: stat("r_modified")?,
            environment: Environment {
                cores: num("cores")? as usize,
                pinning,
                timer_resolution_ns: num("timer_resolution_ns")?,
            },
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CalibrateError> {
        fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CalibrateError> {
    let mut kv = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CalibrateError::Parse(format!("line {}: expected key=value, got {raw:?}", i + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

/// Machine constants from a `key=value` file. Needs `alpha`, `w`,
/// `r_invalid` and `r_modified`; `x_contended` defaults to `w`. Other keys
/// are ignored.
pub fn constants_from_kv(text: &str) -> Result<MachineConstants, CalibrateError> {
    let kv = parse_kv(text)?;
    let num = |k: &str| -> Result<f64, CalibrateError> {
        let v = kv.get(k).ok_or_else(|| CalibrateError::Parse(format!("missing key {k}")))?;
        v.parse().map_err(|_| CalibrateError::Parse(format!("{k}: not a number: {v:?}")))
    };
    let w = num("w")?;
    let x = if kv.contains_key("x_contended") { num("x_contended")? } else { w };
    Ok(MachineConstants::with_contended(num("alpha")?, w, num("r_invalid")?, num("r_modified")?, x)?)
}
