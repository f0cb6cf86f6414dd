//! Phase-aware rescue policy: maps the effective timestep to a rescue ratio
//! `alpha` and an optional margin threshold `tau`.

use serde::{Deserialize, Serialize};

use crate::error::{LadrError, Result};
use crate::schedule::Timestep;

/// One half-open interval `[t_lo, t_hi)` of the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub t_lo: f64,
    pub t_hi: f64,
    pub alpha: f64,
    pub tau: Option<f64>,
}

/// Ordered phases that partition `[0, 1]`; the last phase is closed at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Phase>", into = "Vec<Phase>")]
pub struct PhasePolicy {
    phases: Vec<Phase>,
}

impl PhasePolicy {
    pub fn new(phases: Vec<Phase>) -> Result<Self> {
        let bad = |msg: String| Err(LadrError::Config(format!("phase policy: {msg}")));
        let Some(first) = phases.first() else {
            return bad("no phases".into());
        };
        if first.t_lo != 0.0 {
            return bad(format!("first phase starts at {} instead of 0", first.t_lo));
        }
        let last = phases.last().expect("non-empty");
        if last.t_hi != 1.0 {
            return bad(format!("last phase ends at {} instead of 1", last.t_hi));
        }
        for (i, p) in phases.iter().enumerate() {
            if !(p.t_lo < p.t_hi) {
                return bad(format!("phase {i} is empty: [{}, {})", p.t_lo, p.t_hi));
            }
            if !(0.0..=1.0).contains(&p.alpha) {
                return bad(format!("phase {i} alpha {} outside [0, 1]", p.alpha));
            }
            if let Some(tau) = p.tau {
                if !(0.0..=1.0).contains(&tau) {
                    return bad(format!("phase {i} tau {tau} outside [0, 1]"));
                }
            }
        }
        for (i, pair) in phases.windows(2).enumerate() {
            if pair[0].t_hi != pair[1].t_lo {
                let kind = if pair[0].t_hi < pair[1].t_lo { "gap" } else { "overlap" };
                return bad(format!(
                    "{kind} between phase {i} and {}: {} vs {}",
                    i + 1,
                    pair[0].t_hi,
                    pair[1].t_lo
                ));
            }
        }
        Ok(PhasePolicy { phases })
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// The phase containing `t_eff`.
    pub fn phase_at(&self, t_eff: Timestep) -> &Phase {
        let t = t_eff.get();
        self.phases
            .iter()
            .find(|p| t >= p.t_lo && t < p.t_hi)
            .unwrap_or_else(|| self.phases.last().expect("validated non-empty"))
    }

    /// `(alpha, tau)` of the phase containing `t_eff`.
    pub fn policy_at(&self, t_eff: Timestep) -> (f64, Option<f64>) {
        let p = self.phase_at(t_eff);
        (p.alpha, p.tau)
    }
}

/// Exploration `[0, 0.2)`, structure `[0.2, 0.7)`, refinement `[0.7, 1]`.
impl Default for PhasePolicy {
    fn default() -> Self {
        PhasePolicy {
            phases: vec![
                Phase {
                    t_lo: 0.0,
                    t_hi: 0.2,
                    alpha: 0.1,
                    tau: Some(0.05),
                },
                Phase {
                    t_lo: 0.2,
                    t_hi: 0.7,
                    alpha: 0.3,
                    tau: Some(0.05),
                },
                Phase {
                    t_lo: 0.7,
                    t_hi: 1.0,
                    alpha: 1.0,
                    tau: None,
                },
            ],
        }
    }
}

impl TryFrom<Vec<Phase>> for PhasePolicy {
    type Error = LadrError;

    fn try_from(phases: Vec<Phase>) -> Result<Self> {
        PhasePolicy::new(phases)
    }
}

impl From<PhasePolicy> for Vec<Phase> {
    fn from(p: PhasePolicy) -> Self {
        p.phases
    }
}
