//! Confidence margins, scheduled unmasking, risk-bounded frontier rescue and the
//! ablation selectors that share its budget.
//!
//! Every ranking here breaks ties by ascending flat index.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LadrError, Result};
use crate::floor_count;

const SUM_TOLERANCE: f64 = 1e-6;

/// A categorical distribution over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate_row(&probs)?;
        Ok(TokenDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn margin(&self) -> f64 {
        top_two(&self.0).map_or(0.0, |(p1, p2)| p1 - p2)
    }
}

pub(crate) fn validate_row(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(LadrError::InvalidInput("empty distribution".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(LadrError::InvalidInput(
            "distribution has negative or non-finite entries".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(LadrError::InvalidInput(format!(
            "distribution sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Largest and second-largest entries; the second is 0 for a single class.
pub fn top_two(probs: &[f64]) -> Option<(f64, f64)> {
    if probs.is_empty() {
        return None;
    }
    let (mut p1, mut p2) = (f64::NEG_INFINITY, 0.0f64);
    for (j, &p) in probs.iter().enumerate() {
        if p > p1 {
            if j > 0 {
                p2 = p1;
            }
            p1 = p;
        } else if p > p2 || j == 1 {
            p2 = p;
        }
    }
    Some((p1, p2))
}

/// `p(1) - p(2)` of a raw probability row.
pub fn confidence_margin(probs: &[f64]) -> Result<f64> {
    validate_row(probs)?;
    let (p1, p2) = top_two(probs).expect("validated non-empty");
    Ok(p1 - p2)
}

/// Worst-case error `1 - p(1)` of a binary posterior whose margin is at least
/// `tau`: `(1 - tau) / 2`.
pub fn margin_error_bound(tau: f64) -> f64 {
    1.0 - (1.0 + tau) / 2.0
}

/// Exact worst-case error over `k` classes when every non-leading class may
/// carry up to `p(1) - tau`: `(k - 1)(1 - tau) / k`. Coincides with
/// [`margin_error_bound`] for `k = 2` and exceeds it for `k > 2`.
pub fn margin_error_bound_k(k: usize, tau: f64) -> f64 {
    let k = k as f64;
    (k - 1.0) * (1.0 - tau) / k
}

fn by_key_desc(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Top `k` of `pool` ranked by `key` descending, ties by ascending index.
/// Returns the whole pool, ranked, when it holds fewer than `k` entries.
pub fn top_k_by(pool: &[usize], key: impl Fn(usize) -> f64, k: usize) -> Vec<usize> {
    let mut ranked: Vec<(usize, f64)> = pool.iter().map(|&i| (i, key(i))).collect();
    ranked.sort_by(|&a, &b| by_key_desc(a, b));
    ranked.truncate(k);
    ranked.into_iter().map(|(i, _)| i).collect()
}

/// Scheduled unmasking: among masked positions ranked by top-1 confidence,
/// unmask all but the `n_mask` least confident. Observed positions stay observed.
pub fn standard_select(top1: &[f64], mask: &[bool], n_mask: usize) -> Result<Vec<bool>> {
    if top1.len() != mask.len() {
        return Err(LadrError::InvalidInput(format!(
            "confidence length {} does not match mask length {}",
            top1.len(),
            mask.len()
        )));
    }
    let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if n_mask > masked.len() {
        return Err(LadrError::InvalidInput(format!(
            "n_mask {n_mask} exceeds masked count {}",
            masked.len()
        )));
    }
    let ranked = top_k_by(&masked, |i| top1[i], masked.len());
    let mut out = vec![false; mask.len()];
    for &i in &ranked[masked.len() - n_mask..] {
        out[i] = true;
    }
    Ok(out)
}

/// Rescue budget `floor(|candidates| * alpha)`.
pub fn rescue_budget(candidates: usize, alpha: f64) -> usize {
    floor_count(candidates as f64 * alpha)
}

/// Top `floor(|candidates| * alpha)` candidates by margin among those with
/// margin strictly above `tau` (no threshold when `tau` is `None`).
/// `margins` is indexed by flat position.
pub fn rescue_select(
    margins: &[f64],
    candidates: &[usize],
    alpha: f64,
    tau: Option<f64>,
) -> Vec<usize> {
    let budget = rescue_budget(candidates.len(), alpha);
    if budget == 0 {
        return Vec::new();
    }
    let valid: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| tau.is_none_or(|tau| margins[i] > tau))
        .collect();
    top_k_by(&valid, |i| margins[i], budget)
}

/// Alternative selectors that spend the rescue budget LADR would have used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationKind {
    /// Uniform draws from every masked position.
    RandomMasked,
    /// Highest margins among masked non-frontier positions, then frontier.
    NonNeighborFirst,
    /// Frontier ranked by top-1 probability instead of margin.
    Top1Confidence,
    /// Uniform draws from the frontier.
    RandomNeighbor,
}

/// Per-step inputs shared by the ablation selectors.
#[derive(Debug, Clone, Copy)]
pub struct SelectionState<'a> {
    /// Mask after scheduled unmasking.
    pub mask: &'a [bool],
    /// Frontier of `mask`, ascending.
    pub frontier: &'a [usize],
    pub margins: &'a [f64],
    pub top1: &'a [f64],
}

/// Spend a budget of `k` positions with the given ablation. A budget larger
/// than the pool returns the whole pool.
pub fn ablation_select<R: Rng + ?Sized>(
    kind: AblationKind,
    k: usize,
    state: &SelectionState<'_>,
    rng: &mut R,
) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    match kind {
        AblationKind::RandomMasked => {
            let pool: Vec<usize> = (0..state.mask.len()).filter(|&i| state.mask[i]).collect();
            uniform_subset(&pool, k, rng)
        }
        AblationKind::NonNeighborFirst => {
            let mut in_frontier = vec![false; state.mask.len()];
            for &i in state.frontier {
                in_frontier[i] = true;
            }
            let isolated: Vec<usize> = (0..state.mask.len())
                .filter(|&i| state.mask[i] && !in_frontier[i])
                .collect();
            let mut picked = top_k_by(&isolated, |i| state.margins[i], k);
            if picked.len() < k {
                let rest = k - picked.len();
                picked.extend(top_k_by(state.frontier, |i| state.margins[i], rest));
            }
            picked
        }
        AblationKind::Top1Confidence => top_k_by(state.frontier, |i| state.top1[i], k),
        AblationKind::RandomNeighbor => uniform_subset(state.frontier, k, rng),
    }
}

fn uniform_subset<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    if k >= pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = sample(rng, pool.len(), k)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    picked.sort_unstable();
    picked
}

/// Upper limit on enumerated simplex points before giving up.
pub const BRUTEFORCE_BUDGET: u64 = 200_000_000;

/// Exhaustive search over sorted distributions on the `k`-simplex discretised
/// at `grid_step`, returning the largest `1 - p(1)` among those with
/// `p(1) - p(2) >= tau`.
pub fn margin_bound_bruteforce(k: usize, tau: f64, grid_step: f64) -> Result<f64> {
    if k < 2 {
        return Err(LadrError::InvalidInput(format!("need at least 2 classes, got {k}")));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(LadrError::InvalidInput(format!("tau {tau} outside [0, 1]")));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(LadrError::InvalidInput(format!("grid step {grid_step} outside (0, 1]")));
    }
    let units_f = 1.0 / grid_step;
    let units = units_f.round() as u64;
    if (units_f - units as f64).abs() > 1e-6 {
        return Err(LadrError::InvalidInput(format!(
            "grid step {grid_step} does not divide 1 evenly"
        )));
    }
    let tau_units = tau * units as f64 - 1e-9;

    let mut search = SimplexSearch {
        visited: 0,
        best_top1: None,
    };
    let mut parts = Vec::with_capacity(k);
    search.descend(&mut parts, k, units, units, tau_units)?;
    let best = search
        .best_top1
        .expect("the one-hot point always satisfies the margin for tau <= 1");
    Ok(1.0 - best as f64 / units as f64)
}

struct SimplexSearch {
    visited: u64,
    best_top1: Option<u64>,
}

impl SimplexSearch {
    /// Enumerate non-increasing integer compositions of `remaining` into
    /// `slots` parts each at most `cap`.
    fn descend(
        &mut self,
        parts: &mut Vec<u64>,
        slots: usize,
        remaining: u64,
        cap: u64,
        tau_units: f64,
    ) -> Result<()> {
        self.visited += 1;
        if self.visited > BRUTEFORCE_BUDGET {
            return Err(LadrError::Resource(format!(
                "simplex enumeration exceeded {BRUTEFORCE_BUDGET} points"
            )));
        }
        if slots == 0 {
            if remaining == 0 {
                let p1 = parts[0];
                let p2 = parts.get(1).copied().unwrap_or(0);
                if (p1 - p2) as f64 >= tau_units && self.best_top1.is_none_or(|b| p1 < b) {
                    self.best_top1 = Some(p1);
                }
            }
            return Ok(());
        }
        let hi = cap.min(remaining);
        // Remaining slots cannot hold more than `slots * part`.
        let lo = remaining.div_ceil(slots as u64);
        if lo > hi {
            return Ok(());
        }
        for part in (lo..=hi).rev() {
            parts.push(part);
            self.descend(parts, slots - 1, remaining - part, part, tau_units)?;
            parts.pop();
        }
        Ok(())
    }
}
