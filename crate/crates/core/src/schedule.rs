//! Masking schedule `gamma(t)` in generation-progress orientation: `t = 0` is the
//! fully masked state and `t = 1` the fully decoded one.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{LadrError, Result};
use crate::floor_count;

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Generation progress in `[0, 1]`. Out-of-range values are clamped.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestep(f64);

impl Timestep {
    pub fn new(t: f64) -> Self {
        Timestep(clamp_unit(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Fraction of positions currently masked, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskFraction(f64);

impl MaskFraction {
    pub fn new(rho: f64) -> Self {
        MaskFraction(clamp_unit(rho))
    }

    /// `masked / total`; `total` must be non-zero.
    pub fn from_counts(masked: usize, total: usize) -> Self {
        MaskFraction::new(masked as f64 / total as f64)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `gamma(t) = cos(pi t / 2)`
    Cosine,
    /// `gamma(t) = 1 - t`
    Linear,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::Linear => "linear",
        })
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = LadrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScheduleKind::Cosine),
            "linear" => Ok(ScheduleKind::Linear),
            other => Err(LadrError::Config(format!("unknown schedule kind `{other}`"))),
        }
    }
}

/// A strictly decreasing masking schedule with `gamma(0) = 1`, `gamma(1) = 0`,
/// and a total of `steps` scheduled decode steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub steps: u32,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, steps: u32) -> Result<Self> {
        if steps == 0 {
            return Err(LadrError::Config("schedule steps must be >= 1".into()));
        }
        Ok(Schedule { kind, steps })
    }

    pub fn cosine(steps: u32) -> Result<Self> {
        Schedule::new(ScheduleKind::Cosine, steps)
    }

    pub fn linear(steps: u32) -> Result<Self> {
        Schedule::new(ScheduleKind::Linear, steps)
    }

    /// Expected masked fraction at progress `t`.
    pub fn gamma(&self, t: Timestep) -> MaskFraction {
        let t = t.get();
        let rho = match self.kind {
            // cos(pi/2) is 6e-17 in floating point; pin the endpoint.
            ScheduleKind::Cosine if t >= 1.0 => 0.0,
            ScheduleKind::Cosine => (FRAC_PI_2 * t).cos(),
            ScheduleKind::Linear => 1.0 - t,
        };
        MaskFraction::new(rho)
    }

    /// Closed-form inverse: the progress at which `gamma` equals `rho`.
    pub fn gamma_inv(&self, rho: MaskFraction) -> Timestep {
        let rho = rho.get();
        let t = match self.kind {
            ScheduleKind::Cosine => rho.acos() / FRAC_PI_2,
            ScheduleKind::Linear => 1.0 - rho,
        };
        Timestep::new(t)
    }

    /// `clamp(t_eff + 1/T, 0, 1)`.
    pub fn next_timestep(&self, t_eff: Timestep) -> Timestep {
        Timestep::new(t_eff.get() + 1.0 / f64::from(self.steps))
    }

    /// `floor(n * gamma(t))`, always within `[0, n]`.
    pub fn target_mask_count(&self, n: usize, t: Timestep) -> usize {
        floor_count(n as f64 * self.gamma(t).get()).min(n)
    }
}
