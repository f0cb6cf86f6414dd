//! The decode loop: inverse-scheduled standard unmasking followed by an
//! optional rescue pass over the generation frontier.
//!
//! Per step, with `m` positions still masked out of `N`:
//!
//! 1. `t_eff = gamma_inv(m / N)`, `t_next = clamp(t_eff + 1/T)`, and the target
//!    count `n_mask = floor(N * gamma(t_next))`, clamped below `m`;
//! 2. one denoiser forward, token draws at masked positions, top-1
//!    confidences and margins from the untempered posterior;
//! 3. the `m - n_mask` most confident masked positions are unmasked;
//! 4. the strategy rescues extra positions on the post-selection mask;
//! 5. newly unmasked positions commit their drawn tokens, which never change
//!    afterwards.
//!
//! If `T` steps pass with positions still masked, one extra forward commits
//! the rest by argmax.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, PosteriorBatch, TokenSequence};
use crate::error::{LadrError, Result};
use crate::grid::{Kernel, MaskGrid};
use crate::policy::PhasePolicy;
use crate::schedule::{MaskFraction, Schedule, ScheduleKind, Timestep};
use crate::selection::{
    ablation_select, rescue_select, standard_select, top_two, AblationKind, SelectionState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Standard,
    Ladr,
    RandomMasked,
    NonNeighborFirst,
    Top1Confidence,
    RandomNeighbor,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Standard,
        Strategy::Ladr,
        Strategy::RandomMasked,
        Strategy::NonNeighborFirst,
        Strategy::Top1Confidence,
        Strategy::RandomNeighbor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Standard => "standard",
            Strategy::Ladr => "ladr",
            Strategy::RandomMasked => "random_masked",
            Strategy::NonNeighborFirst => "non_neighbor_first",
            Strategy::Top1Confidence => "top1_confidence",
            Strategy::RandomNeighbor => "random_neighbor",
        }
    }

    pub fn ablation(self) -> Option<AblationKind> {
        match self {
            Strategy::Standard | Strategy::Ladr => None,
            Strategy::RandomMasked => Some(AblationKind::RandomMasked),
            Strategy::NonNeighborFirst => Some(AblationKind::NonNeighborFirst),
            Strategy::Top1Confidence => Some(AblationKind::Top1Confidence),
            Strategy::RandomNeighbor => Some(AblationKind::RandomNeighbor),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = LadrError;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| LadrError::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    Greedy,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub height: usize,
    pub width: usize,
    pub vocab_size: usize,
    pub mask_id: u32,
    pub schedule: Schedule,
    pub policy: PhasePolicy,
    pub kernel: Kernel,
    pub strategy: Strategy,
    pub sampling: SamplingMode,
    pub temperature: f64,
    pub seed: u64,
}

impl DecodeConfig {
    /// 32x32 grid, 16 tokens, 64 cosine steps, default policy, LADR, greedy.
    pub fn demo() -> Self {
        DecodeConfig {
            height: 32,
            width: 32,
            vocab_size: 16,
            mask_id: 16,
            schedule: Schedule {
                kind: ScheduleKind::Cosine,
                steps: 64,
            },
            policy: PhasePolicy::default(),
            kernel: Kernel::default(),
            strategy: Strategy::Ladr,
            sampling: SamplingMode::Greedy,
            temperature: 1.0,
            seed: 0,
        }
    }

    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(LadrError::Config(format!(
                "grid must be non-empty, got {}x{}",
                self.height, self.width
            )));
        }
        if self.vocab_size == 0 {
            return Err(LadrError::Config("vocabulary must be non-empty".into()));
        }
        if (self.mask_id as usize) < self.vocab_size {
            return Err(LadrError::Config(format!(
                "mask id {} lies inside the vocabulary",
                self.mask_id
            )));
        }
        if self.schedule.steps == 0 {
            return Err(LadrError::Config("schedule steps must be >= 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(LadrError::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Telemetry for one denoiser forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub rho_before: f64,
    pub t_eff: f64,
    pub t_next: f64,
    pub n_mask_target: usize,
    pub standard_unmasked: usize,
    pub frontier_size: usize,
    pub rescued: usize,
    pub rho_after: f64,
    pub forward_passes_so_far: u32,
}

#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub tokens: TokenSequence,
    pub trace: Vec<StepRecord>,
    pub nfe: u32,
    pub wall_ms: f64,
}

impl DecodeResult {
    pub fn rescued_total(&self) -> usize {
        self.trace.iter().map(|r| r.rescued).sum()
    }
}

/// Full per-step state handed to observers.
#[derive(Debug)]
pub struct StepDetail<'a> {
    pub record: &'a StepRecord,
    pub mask_before: &'a [bool],
    /// Mask after scheduled unmasking, before rescue.
    pub mask_standard: &'a [bool],
    pub mask_after: &'a [bool],
    pub frontier: &'a [usize],
    pub rescued: &'a [usize],
    pub margins: &'a [f64],
    pub alpha: f64,
    pub tau: Option<f64>,
    pub tokens_after: &'a TokenSequence,
    /// True for the argmax step that runs once `T` steps are exhausted.
    pub forced: bool,
}

/// Decode from the fully masked state.
pub fn decode<D: Denoiser + ?Sized>(denoiser: &mut D, cfg: &DecodeConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    let initial = TokenSequence::fully_masked(cfg.positions(), cfg.vocab_size, cfg.mask_id)?;
    decode_with_observer(denoiser, cfg, initial, |_| {})
}

/// Decode from a partially observed state.
pub fn decode_from<D: Denoiser + ?Sized>(
    denoiser: &mut D,
    cfg: &DecodeConfig,
    initial: TokenSequence,
) -> Result<DecodeResult> {
    decode_with_observer(denoiser, cfg, initial, |_| {})
}

pub fn decode_with_observer<D, F>(
    denoiser: &mut D,
    cfg: &DecodeConfig,
    initial: TokenSequence,
    observer: F,
) -> Result<DecodeResult>
where
    D: Denoiser + ?Sized,
    F: FnMut(&StepDetail<'_>),
{
    run(denoiser, cfg, initial, observer, cfg.schedule.steps)
}

/// The loop proper; `step_limit` is `T` except in tests of the forced finish.
fn run<D, F>(
    denoiser: &mut D,
    cfg: &DecodeConfig,
    initial: TokenSequence,
    mut observer: F,
    step_limit: u32,
) -> Result<DecodeResult>
where
    D: Denoiser + ?Sized,
    F: FnMut(&StepDetail<'_>),
{
    let started = Instant::now();
    cfg.validate()?;
    let n = cfg.positions();
    if denoiser.vocab_size() != cfg.vocab_size {
        return Err(LadrError::Config(format!(
            "denoiser vocabulary {} does not match config vocabulary {}",
            denoiser.vocab_size(),
            cfg.vocab_size
        )));
    }
    if let Some(p) = denoiser.positions() {
        if p != n {
            return Err(LadrError::Config(format!(
                "denoiser is bound to {p} positions, config has {}x{}",
                cfg.height, cfg.width
            )));
        }
    }
    if initial.len() != n
        || initial.vocab_size() != cfg.vocab_size
        || initial.mask_id() != cfg.mask_id
    {
        return Err(LadrError::Config(
            "initial sequence does not match the decode config".into(),
        ));
    }

    let schedule = cfg.schedule;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tokens = initial;
    let mut mask = tokens.mask_flags();
    let mut trace: Vec<StepRecord> = Vec::new();
    let mut top1 = vec![0.0; n];
    let mut margins = vec![0.0; n];
    let mut preds = vec![0u32; n];

    for step in 0..step_limit.min(schedule.steps) {
        let m = mask.iter().filter(|&&b| b).count();
        if m == 0 {
            break;
        }
        let rho = MaskFraction::from_counts(m, n);
        let t_eff = schedule.gamma_inv(rho);
        let t_next = schedule.next_timestep(t_eff);
        // Mathematically floor(N * gamma(t_next)) < m whenever m > 0; the
        // extra bound absorbs round-off so every step makes progress.
        let n_mask = schedule.target_mask_count(n, t_next).min(m - 1);

        let grid = MaskGrid::from_flat(mask.clone(), cfg.height, cfg.width)?;
        let posterior = forward(denoiser, &tokens, &grid, t_next, cfg)?;
        for i in (0..n).filter(|&i| mask[i]) {
            let row = posterior.row(i);
            let (p1, p2) = top_two(row).expect("non-empty row");
            top1[i] = p1;
            margins[i] = p1 - p2;
            preds[i] = sample_row(row, cfg.sampling, cfg.temperature, &mut rng);
        }

        let mut next_mask = standard_select(&top1, &mask, n_mask)?;
        let mask_standard = next_mask.clone();
        let std_grid = MaskGrid::from_flat(mask_standard.clone(), cfg.height, cfg.width)?;
        let frontier = std_grid.frontier(cfg.kernel);
        let (alpha, tau) = cfg.policy.policy_at(t_eff);

        let rescued = match cfg.strategy {
            Strategy::Standard => Vec::new(),
            Strategy::Ladr => rescue_select(&margins, &frontier, alpha, tau),
            other => {
                let budget = rescue_select(&margins, &frontier, alpha, tau).len();
                let state = SelectionState {
                    mask: &mask_standard,
                    frontier: &frontier,
                    margins: &margins,
                    top1: &top1,
                };
                let kind = other.ablation().expect("ablation strategy");
                ablation_select(kind, budget, &state, &mut rng)
            }
        };
        for &i in &rescued {
            debug_assert!(next_mask[i]);
            next_mask[i] = false;
        }

        for i in 0..n {
            if mask[i] && !next_mask[i] {
                tokens.set(i, preds[i]);
            }
        }
        let remaining = next_mask.iter().filter(|&&b| b).count();
        let record = StepRecord {
            step,
            rho_before: rho.get(),
            t_eff: t_eff.get(),
            t_next: t_next.get(),
            n_mask_target: n_mask,
            standard_unmasked: m - n_mask,
            frontier_size: frontier.len(),
            rescued: rescued.len(),
            rho_after: remaining as f64 / n as f64,
            forward_passes_so_far: step + 1,
        };
        observer(&StepDetail {
            record: &record,
            mask_before: &mask,
            mask_standard: &mask_standard,
            mask_after: &next_mask,
            frontier: &frontier,
            rescued: &rescued,
            margins: &margins,
            alpha,
            tau,
            tokens_after: &tokens,
            forced: false,
        });
        trace.push(record);
        mask = next_mask;
    }

    let m = mask.iter().filter(|&&b| b).count();
    if m > 0 {
        let rho = MaskFraction::from_counts(m, n);
        let t_eff = schedule.gamma_inv(rho);
        let t_next = schedule.next_timestep(t_eff);
        let grid = MaskGrid::from_flat(mask.clone(), cfg.height, cfg.width)?;
        let posterior = forward(denoiser, &tokens, &grid, t_next, cfg)?;
        for i in (0..n).filter(|&i| mask[i]) {
            let mut greedy = ChaCha8Rng::seed_from_u64(0);
            tokens.set(
                i,
                sample_row(posterior.row(i), SamplingMode::Greedy, 1.0, &mut greedy),
            );
        }
        let cleared = vec![false; n];
        let record = StepRecord {
            step: trace.len() as u32,
            rho_before: rho.get(),
            t_eff: t_eff.get(),
            t_next: t_next.get(),
            n_mask_target: 0,
            standard_unmasked: m,
            frontier_size: 0,
            rescued: 0,
            rho_after: 0.0,
            forward_passes_so_far: trace.len() as u32 + 1,
        };
        observer(&StepDetail {
            record: &record,
            mask_before: &mask,
            mask_standard: &cleared,
            mask_after: &cleared,
            frontier: &[],
            rescued: &[],
            margins: &margins,
            alpha: 0.0,
            tau: None,
            tokens_after: &tokens,
            forced: true,
        });
        trace.push(record);
    }

    Ok(DecodeResult {
        tokens,
        nfe: trace.len() as u32,
        trace,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn forward<D: Denoiser + ?Sized>(
    denoiser: &mut D,
    tokens: &TokenSequence,
    grid: &MaskGrid,
    t: Timestep,
    cfg: &DecodeConfig,
) -> Result<PosteriorBatch> {
    let posterior = denoiser.predict(tokens, grid, t)?;
    if posterior.positions() != cfg.positions() || posterior.vocab_size() != cfg.vocab_size {
        return Err(LadrError::Config(format!(
            "denoiser returned a {}x{} posterior, expected {}x{}",
            posterior.positions(),
            posterior.vocab_size(),
            cfg.positions(),
            cfg.vocab_size
        )));
    }
    Ok(posterior)
}

/// Draw one token from a probability row. Greedy takes the argmax (lowest
/// index on ties); categorical draws from `p^(1/temperature)` renormalised.
pub fn sample_row<R: Rng + ?Sized>(
    row: &[f64],
    mode: SamplingMode,
    temperature: f64,
    rng: &mut R,
) -> u32 {
    let (argmax, pmax) = row
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |(bi, bp), (i, &p)| {
            if p > bp {
                (i, p)
            } else {
                (bi, bp)
            }
        });
    match mode {
        SamplingMode::Greedy => argmax as u32,
        SamplingMode::Categorical => {
            // Scale by the max before tempering so tiny temperatures do not
            // underflow every weight to zero.
            let inv_t = 1.0 / temperature;
            let weight = |p: f64| if p > 0.0 { (p / pmax).powf(inv_t) } else { 0.0 };
            let total: f64 = row.iter().map(|&p| weight(p)).sum();
            let mut u = rng.gen::<f64>() * total;
            let mut last = argmax;
            for (i, &p) in row.iter().enumerate() {
                let w = weight(p);
                if w <= 0.0 {
                    continue;
                }
                if u < w {
                    return i as u32;
                }
                u -= w;
                last = i;
            }
            last as u32
        }
    }
}

/// Draw one token per row of `posterior`.
pub fn sample_tokens<R: Rng + ?Sized>(
    posterior: &PosteriorBatch,
    mode: SamplingMode,
    temperature: f64,
    rng: &mut R,
) -> Vec<u32> {
    posterior
        .rows()
        .map(|row| sample_row(row, mode, temperature, rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{PlantedOracle, PottsConditional};

    fn planted(cfg: &DecodeConfig) -> PlantedOracle {
        let target: Vec<u32> = (0..cfg.positions())
            .map(|i| (i % cfg.vocab_size) as u32)
            .collect();
        PlantedOracle::new(target, cfg.vocab_size, 0.3, 0.08, cfg.kernel).unwrap()
    }

    fn small(h: usize, w: usize, steps: u32, strategy: Strategy) -> DecodeConfig {
        DecodeConfig {
            height: h,
            width: w,
            vocab_size: 4,
            mask_id: 4,
            schedule: Schedule::cosine(steps).unwrap(),
            strategy,
            ..DecodeConfig::demo()
        }
    }

    #[test]
    fn all_observed_is_a_no_op() {
        let cfg = small(2, 2, 4, Strategy::Ladr);
        let init = TokenSequence::new(vec![0, 1, 2, 3], 4, 4).unwrap();
        let res = decode_from(&mut planted(&cfg), &cfg, init.clone()).unwrap();
        assert_eq!(res.nfe, 0);
        assert!(res.trace.is_empty());
        assert_eq!(res.tokens, init);
    }

    #[test]
    fn single_cell_finishes_in_one_step() {
        let cfg = small(1, 1, 4, Strategy::Ladr);
        let res = decode(&mut planted(&cfg), &cfg).unwrap();
        assert_eq!(res.nfe, 1);
        let r = &res.trace[0];
        assert_eq!(r.t_next, 0.25);
        assert_eq!(r.n_mask_target, 0);
        assert_eq!(r.standard_unmasked, 1);
        assert!(res.tokens.is_fully_decoded());
    }

    #[test]
    fn two_by_two_standard_hand_simulation() {
        let cfg = small(2, 2, 2, Strategy::Standard);
        let res = decode(&mut planted(&cfg), &cfg).unwrap();
        assert_eq!(res.nfe, 2);
        assert_eq!(res.trace[0].n_mask_target, 2);
        assert_eq!(res.trace[0].standard_unmasked, 2);
        assert!((res.trace[1].t_eff - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(res.trace[1].t_next, 1.0);
        assert_eq!(res.trace[1].n_mask_target, 0);
        assert_eq!(res.trace[1].standard_unmasked, 2);
    }

    #[test]
    fn greedy_planted_recovers_target() {
        let cfg = DecodeConfig::demo();
        let mut d = planted(&cfg);
        let res = decode(&mut d, &cfg).unwrap();
        assert_eq!(res.tokens.tokens(), d.target());
        assert_eq!(res.trace.last().unwrap().rho_after, 0.0);
    }

    #[test]
    fn forced_final_step_when_steps_run_out() {
        let cfg = small(4, 4, 64, Strategy::Ladr);
        let mut d = planted(&cfg);
        let init = TokenSequence::fully_masked(16, 4, 4).unwrap();
        let mut forced = 0;
        let res = run(&mut d, &cfg, init, |s| forced += usize::from(s.forced), 1).unwrap();
        assert_eq!(forced, 1);
        assert_eq!(res.nfe, 2);
        let last = res.trace.last().unwrap();
        assert_eq!(last.rho_after, 0.0);
        assert_eq!(last.rescued, 0);
        assert!(res.tokens.is_fully_decoded());
        // Greedy on the planted oracle always lands on the target.
        assert_eq!(res.tokens.tokens(), d.target());
    }

    #[test]
    fn mismatched_denoiser_rejected() {
        let cfg = small(2, 2, 2, Strategy::Ladr);
        let mut wrong_vocab = PottsConditional::new(3, 1.0).unwrap();
        assert!(matches!(decode(&mut wrong_vocab, &cfg), Err(LadrError::Config(_))));
        let other = small(3, 3, 2, Strategy::Ladr);
        assert!(matches!(
            decode(&mut planted(&other), &cfg),
            Err(LadrError::Config(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small(2, 2, 2, Strategy::Ladr);
        cfg.temperature = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(2, 2, 2, Strategy::Ladr);
        cfg.mask_id = 2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn greedy_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_row(&[0.1, 0.7, 0.2], SamplingMode::Greedy, 1.0, &mut rng), 1);
        assert_eq!(sample_row(&[0.5, 0.5], SamplingMode::Greedy, 1.0, &mut rng), 0);
    }

    #[test]
    fn cold_categorical_matches_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                let raw: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|x| x / s).collect()
            })
            .collect();
        for row in &rows {
            let g = sample_row(row, SamplingMode::Greedy, 1.0, &mut rng);
            let c = sample_row(row, SamplingMode::Categorical, 1e-4, &mut rng);
            assert_eq!(g, c);
        }
    }

    #[test]
    fn categorical_frequencies_follow_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row = [0.2, 0.5, 0.3, 0.0];
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            counts[sample_row(&row, SamplingMode::Categorical, 1.0, &mut rng) as usize] += 1;
        }
        assert_eq!(counts[3], 0);
        for (c, p) in counts.iter().zip(row) {
            assert!((*c as f64 / 20_000.0 - p).abs() < 0.015, "{counts:?}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("prophet".parse::<Strategy>().is_err());
    }
}
