//! Closed-form throughput model for an MCS-locked coarse-grained operation.
//!
//! Each operation runs a critical section of `c` work units under the lock
//! and then a parallel section of `p` work units. Two steady states have
//! exact throughputs:
//!
//! * **Contended**: the queue never drains. Hand-off costs one critical
//!   section, the releaser's read of `next`, the unlock write and the
//!   successor's spin read: `alpha / (c + 2*r_invalid + w)`.
//! * **Free**: every acquirer finds the tail null. Each process runs its own
//!   operation back to back: `alpha * n / (p + c + r_modified + 4*w)`.
//!
//! Between the two regimes the predictor interpolates linearly in `p`.

use std::fmt;

use crate::error::ModelError;

/// Calibrated per-machine cost constants, all in work units except `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineConstants {
    /// Work units one process completes per time unit.
    pub alpha: f64,
    /// Any write, and any uncontended swap or CAS.
    pub w: f64,
    /// Read of a line held Invalid in the reader's cache.
    pub r_invalid: f64,
    /// Read of a line the reader holds Modified, Exclusive or Shared.
    pub r_modified: f64,
    /// Contended swap or CAS. Only the simulator's startup phase pays it.
    pub x_contended: f64,
}

impl MachineConstants {
    /// Builds constants with `x_contended = w` and validates them.
    pub fn new(alpha: f64, w: f64, r_invalid: f64, r_modified: f64) -> Result<Self, ModelError> {
        Self::with_contended(alpha, w, r_invalid, r_modified, w)
    }

    pub fn with_contended(
        alpha: f64,
        w: f64,
        r_invalid: f64,
        r_modified: f64,
        x_contended: f64,
    ) -> Result<Self, ModelError> {
        let m = Self { alpha, w, r_invalid, r_modified, x_contended };
        m.validate()?;
        Ok(m)
    }

    /// Intel Xeon Gold 6230, 16 cores.
    pub fn intel_xeon_gold_6230() -> Self {
        Self { alpha: 4.04e5, w: 15.0, r_invalid: 30.0, r_modified: 15.0, x_contended: 15.0 }
    }

    /// AMD Opteron 6378, 16 cores.
    pub fn amd_opteron_6378() -> Self {
        Self { alpha: 1.24e5, w: 20.0, r_invalid: 35.0, r_modified: 15.0, x_contended: 20.0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("alpha", self.alpha),
            ("w", self.w),
            ("r_invalid", self.r_invalid),
            ("r_modified", self.r_modified),
            ("x_contended", self.x_contended),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(ModelError::InvalidConstants(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if self.r_invalid < self.w {
            return Err(ModelError::InvalidConstants(format!(
                "r_invalid ({}) must be >= w ({})",
                self.r_invalid, self.w
            )));
        }
        if self.r_modified > self.r_invalid {
            return Err(ModelError::InvalidConstants(format!(
                "r_modified ({}) must be <= r_invalid ({})",
                self.r_modified, self.r_invalid
            )));
        }
        if self.x_contended < self.w {
            return Err(ModelError::InvalidConstants(format!(
                "x_contended ({}) must be >= w ({})",
                self.x_contended, self.w
            )));
        }
        Ok(())
    }

    /// Length of one lock hand-off in the contended steady state.
    pub fn handoff(&self, c: f64) -> f64 {
        c + 2.0 * self.r_invalid + self.w
    }
}

/// One experiment point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Workload {
    /// Number of processes.
    pub n: usize,
    /// Critical-section work.
    pub c: f64,
    /// Parallel-section work.
    pub p: f64,
}

impl Workload {
    pub fn new(n: usize, c: f64, p: f64) -> Result<Self, ModelError> {
        let wl = Self { n, c, p };
        wl.validate()?;
        Ok(wl)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::InvalidWorkload("n must be >= 1".into()));
        }
        for (name, v) in [("c", self.c), ("p", self.p)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ModelError::InvalidWorkload(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_p(self, p: f64) -> Self {
        Self { p, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// The lock is always taken; throughput is flat in `n` and `p`.
    Contended,
    /// Every acquisition finds the lock free.
    Free,
    /// Between the two, bridged by linear interpolation.
    Transition,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Contended => "contended",
            Regime::Free => "free",
            Regime::Transition => "transition",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contended" => Ok(Regime::Contended),
            "free" => Ok(Regime::Free),
            "transition" => Ok(Regime::Transition),
            other => Err(ModelError::InvalidWorkload(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub regime: Regime,
    /// Operations per time unit.
    pub throughput: f64,
    /// Largest `p` still in the contended regime.
    pub p_low: f64,
    /// Smallest `p` already in the free regime.
    pub p_high: f64,
}

/// Returns `(p_low, p_high)`, the parallel-work window separating the
/// contended and free regimes. Both bounds are clamped at zero.
pub fn transition_window(m: &MachineConstants, n: usize, c: f64) -> (f64, f64) {
    let span = (n.saturating_sub(1)) as f64 * m.handoff(c);
    let p_low = (span - 4.0 * m.w).max(0.0);
    let p_high = (span + m.r_invalid - m.r_modified - 2.0 * m.w).max(0.0);
    assert!(p_low <= p_high, "transition window inverted: ({p_low}, {p_high})");
    (p_low, p_high)
}

/// Free wins ties, so an empty window (single process) classifies as free.
fn regime_in_window(p: f64, p_low: f64, p_high: f64) -> Regime {
    if p >= p_high {
        Regime::Free
    } else if p <= p_low {
        Regime::Contended
    } else {
        Regime::Transition
    }
}

pub fn classify_regime(m: &MachineConstants, wl: &Workload) -> Regime {
    let (p_low, p_high) = transition_window(m, wl.n, wl.c);
    regime_in_window(wl.p, p_low, p_high)
}

pub fn throughput_contended(m: &MachineConstants, c: f64) -> f64 {
    m.alpha / m.handoff(c)
}

pub fn throughput_free(m: &MachineConstants, wl: &Workload) -> f64 {
    m.alpha * wl.n as f64 / (wl.p + wl.c + m.r_modified + 4.0 * m.w)
}

pub fn predict(m: &MachineConstants, wl: &Workload) -> Prediction {
    let (p_low, p_high) = transition_window(m, wl.n, wl.c);
    let regime = regime_in_window(wl.p, p_low, p_high);
    let throughput = match regime {
        Regime::Contended => throughput_contended(m, wl.c),
        Regime::Free => throughput_free(m, wl),
        Regime::Transition => {
            let lo = throughput_contended(m, wl.c);
            let hi = throughput_free(m, &wl.with_p(p_high));
            let t = (wl.p - p_low) / (p_high - p_low);
            lo + t * (hi - lo)
        }
    };
    Prediction { regime, throughput, p_low, p_high }
}

/// Recovers `alpha` from a run where `n` processes completed `f` operations
/// of `p` work units each in `t` time units.
pub fn estimate_alpha(p: f64, f: f64, t: f64, n: usize) -> Result<f64, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidMeasurement("process count is zero".into()));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(ModelError::InvalidMeasurement(format!("elapsed time must be > 0, got {t}")));
    }
    if f.is_nan() || p.is_nan() || f < 0.0 || p < 0.0 {
        return Err(ModelError::InvalidMeasurement(format!(
            "work and operation count must be >= 0 (p={p}, f={f})"
        )));
    }
    Ok(p * f / (t * n as f64))
}

/// Predicts every point of a `p` sweep, preserving input order.
pub fn sweep(
    m: &MachineConstants,
    n: usize,
    c: f64,
    p_values: &[f64],
) -> Result<Vec<(f64, Prediction)>, ModelError> {
    if p_values.is_empty() {
        return Err(ModelError::EmptyInput("p_values"));
    }
    m.validate()?;
    p_values
        .iter()
        .map(|&p| {
            let wl = Workload::new(n, c, p)?;
            Ok((p, predict(m, &wl)))
        })
        .collect()
}
