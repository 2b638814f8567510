//! Experiment configuration: a flat TOML file whose keys can each be
//! overridden from the command line.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use mcsperf_calibrate::constants_from_kv;
use mcsperf_core::{MachineConstants, Workload};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Intel,
    Amd,
}

impl Preset {
    pub fn constants(self) -> MachineConstants {
        match self {
            Preset::Intel => MachineConstants::intel_xeon_gold_6230(),
            Preset::Amd => MachineConstants::amd_opteron_6378(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    #[default]
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Predict,
    Simulate,
    Bench,
    All,
}

/// Every field is optional so a file and the flags can be layered; the
/// resolved values come from the accessor methods.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    /// Calibration report to read constants from.
    pub constants: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub w: Option<f64>,
    pub r_invalid: Option<f64>,
    pub r_modified: Option<f64>,
    pub x_contended: Option<f64>,

    pub n: Option<Vec<usize>>,
    pub c: Option<Vec<f64>>,
    /// Explicit parallel-work values; replaces the range keys.
    pub p: Option<Vec<f64>>,
    pub p_min: Option<f64>,
    pub p_max: Option<f64>,
    pub p_steps: Option<usize>,
    pub p_scale: Option<Scale>,

    pub mode: Option<Mode>,
    pub output: Option<PathBuf>,

    pub ops_target: Option<u64>,
    pub warmup: Option<u64>,
    pub trace: Option<bool>,
    pub trace_dir: Option<PathBuf>,

    /// Seconds per benchmark point.
    pub duration: Option<f64>,
    pub allow_cross_socket: Option<bool>,
}

pub const DEFAULT_P_MIN: f64 = 100.0;
pub const DEFAULT_P_MAX: f64 = 1_000_000.0;
pub const DEFAULT_P_STEPS: usize = 41;
pub const DEFAULT_DURATION: f64 = 2.0;

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative paths inside a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.constants, &mut cfg.output, &mut cfg.trace_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Keys set in `other` replace the ones here.
    pub fn merge(self, other: Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            preset, constants, alpha, w, r_invalid, r_modified, x_contended, n, c, p, p_min, p_max,
            p_steps, p_scale, mode, output, ops_target, warmup, trace, trace_dir, duration,
            allow_cross_socket
        )
    }

    /// A report file or preset gives the base; inline values override
    /// single fields. Without a base all four of `alpha`, `w`, `r_invalid`
    /// and `r_modified` must be given.
    pub fn machine_constants(&self) -> Result<MachineConstants, CliError> {
        let base = match (&self.constants, self.preset) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either a constants file or a preset, not both".into()))
            }
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::io(format!("reading constants {}", path.display()), e))?;
                Some(constants_from_kv(&text)?)
            }
            (None, Some(preset)) => Some(preset.constants()),
            (None, None) => None,
        };
        let m = match base {
            Some(b) => {
                let w = self.w.unwrap_or(b.w);
                // x follows an overridden w unless set itself.
                let x = self.x_contended.unwrap_or(if self.w.is_some() { w } else { b.x_contended });
                MachineConstants {
                    alpha: self.alpha.unwrap_or(b.alpha),
                    w,
                    r_invalid: self.r_invalid.unwrap_or(b.r_invalid),
                    r_modified: self.r_modified.unwrap_or(b.r_modified),
                    x_contended: x,
                }
            }
            None => match (self.alpha, self.w, self.r_invalid, self.r_modified) {
                (Some(alpha), Some(w), Some(r_invalid), Some(r_modified)) => MachineConstants {
                    alpha,
                    w,
                    r_invalid,
                    r_modified,
                    x_contended: self.x_contended.unwrap_or(w),
                },
                _ => {
                    return Err(CliError::Config(
                        "no machine constants: set preset, constants, or all of alpha, w, r_invalid, r_modified"
                            .into(),
                    ))
                }
            },
        };
        m.validate()?;
        Ok(m)
    }

    pub fn p_values(&self) -> Result<Vec<f64>, CliError> {
        if let Some(ps) = &self.p {
            if self.p_min.is_some() || self.p_max.is_some() || self.p_steps.is_some() {
                return Err(CliError::Config("give either p or the p_min/p_max/p_steps range, not both".into()));
            }
            if ps.is_empty() {
                return Err(CliError::Config("p is empty".into()));
            }
            return Ok(ps.clone());
        }
        let lo = self.p_min.unwrap_or(DEFAULT_P_MIN);
        let hi = self.p_max.unwrap_or(DEFAULT_P_MAX);
        let steps = self.p_steps.unwrap_or(DEFAULT_P_STEPS);
        p_range(lo, hi, steps, self.p_scale.unwrap_or_default())
    }

    /// Grid points in `n`, then `c`, then `p` order.
    pub fn grid(&self) -> Result<Vec<Workload>, CliError> {
        let ns = self.n.as_deref().ok_or_else(|| CliError::Config("n is not set".into()))?;
        let cs = self.c.as_deref().ok_or_else(|| CliError::Config("c is not set".into()))?;
        if ns.is_empty() || cs.is_empty() {
            return Err(CliError::Config("n and c must be non-empty".into()));
        }
        let ps = self.p_values()?;
        let mut out = Vec::with_capacity(ns.len() * cs.len() * ps.len());
        for &n in ns {
            for &c in cs {
                for &p in &ps {
                    out.push(Workload::new(n, c, p)?);
                }
            }
        }
        Ok(out)
    }

    pub fn duration(&self) -> Result<Duration, CliError> {
        let secs = self.duration.unwrap_or(DEFAULT_DURATION);
        Duration::try_from_secs_f64(secs).map_err(|_| CliError::Config(format!("bad duration {secs}")))
    }
}

/// `steps` values from `lo` to `hi` inclusive. Log ranges are rounded to
/// whole work units and deduplicated.
pub fn p_range(lo: f64, hi: f64, steps: usize, scale: Scale) -> Result<Vec<f64>, CliError> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0) {
        return Err(CliError::Config(format!("bad p range {lo}..{hi}")));
    }
    if lo > hi {
        return Err(CliError::Config(format!("p_min {lo} > p_max {hi}")));
    }
    if steps == 0 {
        return Err(CliError::Config("p_steps must be >= 1".into()));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    let last = (steps - 1) as f64;
    match scale {
        Scale::Linear => Ok((0..steps).map(|i| lo + (hi - lo) * i as f64 / last).collect()),
        Scale::Log => {
            if lo <= 0.0 {
                return Err(CliError::Config("a log p range needs p_min > 0".into()));
            }
            let ratio = (hi / lo).ln();
            let mut ps: Vec<f64> =
                (0..steps).map(|i| (lo * (ratio * i as f64 / last).exp()).round()).collect();
            ps.dedup();
            Ok(ps)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_range_is_rounded_and_deduplicated() {
        assert_eq!(p_range(1.0, 1000.0, 4, Scale::Log).unwrap(), vec![1.0, 10.0, 100.0, 1000.0]);
        assert_eq!(p_range(1.0, 2.0, 5, Scale::Log).unwrap(), vec![1.0, 2.0]);
        assert_eq!(p_range(0.0, 10.0, 3, Scale::Linear).unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(p_range(7.0, 7.0, 1, Scale::Log).unwrap(), vec![7.0]);
        assert!(p_range(0.0, 10.0, 3, Scale::Log).is_err());
        assert!(p_range(10.0, 1.0, 3, Scale::Linear).is_err());
        assert!(p_range(1.0, 10.0, 0, Scale::Linear).is_err());
    }

    #[test]
    fn flat_toml_with_lists() {
        let cfg = ExperimentConfig::from_toml(
            "preset = \"intel\"\nn = [15]\nc = [500, 1000.0]\np = [0, 1e3]\nmode = \"simulate\"\n",
        )
        .unwrap();
        assert_eq!(cfg.machine_constants().unwrap(), MachineConstants::intel_xeon_gold_6230());
        assert_eq!(cfg.mode, Some(Mode::Simulate));
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.len(), 4);
        assert_eq!((grid[3].n, grid[3].c, grid[3].p), (15, 1000.0, 1000.0));
        assert!(ExperimentConfig::from_toml("typo = 1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = ExperimentConfig { preset: Some(Preset::Intel), n: Some(vec![2]), ..Default::default() };
        let flags = ExperimentConfig { n: Some(vec![4, 8]), x_contended: Some(45.0), ..Default::default() };
        let cfg = file.merge(flags);
        assert_eq!(cfg.n, Some(vec![4, 8]));
        assert_eq!(cfg.preset, Some(Preset::Intel));
        assert_eq!(cfg.machine_constants().unwrap().x_contended, 45.0);
    }

    #[test]
    fn constants_sources() {
        let inline = ExperimentConfig {
            alpha: Some(1e5),
            w: Some(10.0),
            r_invalid: Some(20.0),
            r_modified: Some(5.0),
            ..Default::default()
        };
        assert_eq!(inline.machine_constants().unwrap().x_contended, 10.0);
        let partial = ExperimentConfig { alpha: Some(1e5), ..Default::default() };
        assert!(matches!(partial.machine_constants(), Err(CliError::Config(_))));
        let bad = ExperimentConfig { preset: Some(Preset::Amd), r_invalid: Some(1.0), ..Default::default() };
        assert!(matches!(bad.machine_constants(), Err(CliError::Model(_))));
        let both = ExperimentConfig { preset: Some(Preset::Amd), constants: Some("x".into()), ..Default::default() };
        assert!(matches!(both.machine_constants(), Err(CliError::Config(_))));
    }

    #[test]
    fn grid_errors() {
        let empty = ExperimentConfig { n: Some(vec![]), c: Some(vec![1.0]), p: Some(vec![1.0]), ..Default::default() };
        assert!(empty.grid().is_err());
        let zero_n = ExperimentConfig { n: Some(vec![0]), c: Some(vec![1.0]), p: Some(vec![1.0]), ..Default::default() };
        assert!(matches!(zero_n.grid(), Err(CliError::Model(_))));
        let both = ExperimentConfig { p: Some(vec![1.0]), p_steps: Some(3), ..Default::default() };
        assert!(both.p_values().is_err());
    }
}
