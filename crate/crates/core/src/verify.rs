//! Independent checks for the margin error bound, the locality information gain
//! on a Potts lattice, and the consistency of decode traces with the schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::StepRecord;
use crate::denoiser::gibbs_sample_potts;
use crate::error::{LadrError, Result};
use crate::grid::four_neighbors;
use crate::schedule::{Schedule, Timestep};
use crate::selection::{margin_bound_bruteforce, margin_error_bound};

// ---------------------------------------------------------------------------
// Margin bound sweep

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginRow {
    pub k: usize,
    pub tau: f64,
    pub bruteforce: f64,
    pub bound: f64,
    pub gap: f64,
    /// `bruteforce <= bound + step` and `bound - bruteforce <= step`.
    pub holds: bool,
}

/// `tau` values `step, 2*step, ...` strictly below 1.
pub fn tau_grid(step: f64) -> Vec<f64> {
    let n = (1.0 / step - 1e-9).floor() as usize;
    (1..=n)
        .map(|i| (i as f64 * step * 1e6).round() / 1e6)
        .filter(|&t| t < 1.0)
        .collect()
}

/// Brute-force worst-case error against the analytic bound for every
/// `(k, tau)` pair.
pub fn run_margin_sweep(ks: &[usize], taus: &[f64], grid_step: f64) -> Result<Vec<MarginRow>> {
    if ks.is_empty() || taus.is_empty() {
        return Err(LadrError::InvalidInput("empty K or tau range".into()));
    }
    let cells: Vec<(usize, f64)> = ks
        .iter()
        .flat_map(|&k| taus.iter().map(move |&t| (k, t)))
        .collect();
    cells
        .into_par_iter()
        .map(|(k, tau)| {
            let bruteforce = margin_bound_bruteforce(k, tau, grid_step)?;
            let bound = margin_error_bound(tau);
            let slack = grid_step + 1e-9;
            Ok(MarginRow {
                k,
                tau,
                bruteforce,
                bound,
                gap: bound - bruteforce,
                holds: bruteforce <= bound + slack && bound - bruteforce <= slack,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Trace consistency

#[derive(Debug, Clone, PartialEq)]
pub enum TraceCheck {
    Pass,
    Fail { record: usize, reason: String },
}

impl TraceCheck {
    pub fn passed(&self) -> bool {
        matches!(self, TraceCheck::Pass)
    }
}

/// Check every record of a decode trace against the schedule it claims to
/// follow over `n` positions.
pub fn check_trace_consistency(trace: &[StepRecord], schedule: &Schedule, n: usize) -> Result<TraceCheck> {
    if trace.is_empty() {
        return Err(LadrError::InvalidInput("empty trace".into()));
    }
    if n == 0 {
        return Err(LadrError::InvalidInput("trace over zero positions".into()));
    }
    let quantum = 1.0 / n as f64;
    let eps = 1e-9;
    let fail = |record: usize, reason: String| Ok(TraceCheck::Fail { record, reason });
    for (idx, r) in trace.iter().enumerate() {
        let expected_rho = schedule.gamma(Timestep::new(r.t_eff)).get();
        if (expected_rho - r.rho_before).abs() > quantum + eps {
            return fail(
                idx,
                format!(
                    "gamma(t_eff) = {expected_rho} but rho_before = {} (slack {quantum})",
                    r.rho_before
                ),
            );
        }
        let expected_next = schedule.next_timestep(Timestep::new(r.t_eff)).get();
        if (expected_next - r.t_next).abs() > eps {
            return fail(idx, format!("t_next = {} but expected {expected_next}", r.t_next));
        }
        if r.rho_after > r.rho_before + eps {
            return fail(idx, format!("rho rose from {} to {}", r.rho_before, r.rho_after));
        }
        let accounted = r.rho_before - (r.standard_unmasked + r.rescued) as f64 * quantum;
        if (accounted - r.rho_after).abs() > eps {
            return fail(
                idx,
                format!("rho_after = {} but accounting gives {accounted}", r.rho_after),
            );
        }
        if r.forward_passes_so_far as usize != idx + 1 {
            return fail(
                idx,
                format!("forward_passes_so_far = {} at record {idx}", r.forward_passes_so_far),
            );
        }
        if let Some(next) = trace.get(idx + 1) {
            if (next.rho_before - r.rho_after).abs() > eps {
                return fail(
                    idx,
                    format!("rho_after = {} but next rho_before = {}", r.rho_after, next.rho_before),
                );
            }
        }
    }
    Ok(TraceCheck::Pass)
}

// ---------------------------------------------------------------------------
// Locality mutual information

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiParams {
    pub vocab_size: usize,
    pub beta: f64,
    pub height: usize,
    pub width: usize,
    pub samples: usize,
    pub d_far: usize,
    pub sweeps: usize,
    pub bootstrap: usize,
    pub seed: u64,
}

impl Default for MiParams {
    fn default() -> Self {
        MiParams {
            vocab_size: 3,
            beta: 1.2,
            height: 16,
            width: 16,
            samples: 50_000,
            d_far: 6,
            sweeps: 32,
            bootstrap: 200,
            seed: 0,
        }
    }
}

/// Estimated information (in bits) the centre cell shares with its four
/// neighbours jointly and with one far cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiReport {
    pub i_near: f64,
    pub i_far: f64,
    /// Bootstrap standard deviation of `i_near - i_far`.
    pub bootstrap_std: f64,
    pub samples: usize,
    /// Some joint cell was seen fewer than 5 times.
    pub sparse_support: bool,
}

impl MiReport {
    /// `i_near - i_far > 3 * bootstrap_std`.
    pub fn near_dominates(&self) -> bool {
        self.i_near - self.i_far > 3.0 * self.bootstrap_std
    }

    /// Both estimates within `3 * bootstrap_std` of zero.
    pub fn both_negligible(&self) -> bool {
        let band = 3.0 * self.bootstrap_std;
        self.i_near.abs() <= band && self.i_far.abs() <= band
    }
}

/// Noise floor below zero tolerated in bias-corrected estimates.
pub const MI_NOISE_FLOOR: f64 = 1e-3;
const MIN_SAMPLES: usize = 1000;

/// One observation: the centre token, the code of its neighbour tuple, and the
/// far token.
#[derive(Debug, Clone, Copy)]
struct Triple {
    centre: u32,
    near: u32,
    far: u32,
}

pub fn mi_locality_check(params: &MiParams) -> Result<MiReport> {
    let p = params;
    if p.d_far < 2 {
        return Err(LadrError::InvalidInput(format!(
            "far distance {} overlaps the neighbourhood; need >= 2",
            p.d_far
        )));
    }
    if p.height < 2 * p.d_far + 1 || p.width < 2 * p.d_far + 1 {
        return Err(LadrError::InvalidInput(format!(
            "{}x{} grid too small for far distance {}",
            p.height, p.width, p.d_far
        )));
    }
    if p.samples < MIN_SAMPLES {
        return Err(LadrError::InvalidInput(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            p.samples
        )));
    }
    if !(p.beta >= 0.0) {
        return Err(LadrError::InvalidInput(format!("beta {} must be >= 0", p.beta)));
    }
    if p.bootstrap < 2 {
        return Err(LadrError::InvalidInput("need at least 2 bootstrap resamples".into()));
    }
    let (h, w, k) = (p.height, p.width, p.vocab_size);
    let centre = (h / 2) * w + w / 2;
    let far = if w / 2 + p.d_far < w {
        centre + p.d_far
    } else {
        centre - p.d_far
    };
    let neighbours: Vec<usize> = four_neighbors(h, w, centre).collect();

    // Per-sample seeds make the corpus independent of the worker count.
    let corpus: Vec<Triple> = (0..p.samples)
        .into_par_iter()
        .map(|s| {
            let seed = splitmix(p.seed ^ splitmix(s as u64));
            let grid = gibbs_sample_potts(h, w, k, p.beta, p.sweeps, seed)?;
            let z = grid.tokens();
            let near = neighbours
                .iter()
                .fold(0u32, |code, &j| code * k as u32 + z[j]);
            Ok(Triple {
                centre: z[centre],
                near,
                far: z[far],
            })
        })
        .collect::<Result<_>>()?;

    let near_card = (k as u32).pow(neighbours.len() as u32) as usize;
    let (i_near, sparse_near) = mutual_information(&corpus, k, near_card, |t| t.near);
    let (i_far, sparse_far) = mutual_information(&corpus, k, k, |t| t.far);

    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(p.seed ^ 0xB007));
    let mut diffs = Vec::with_capacity(p.bootstrap);
    let mut resample = Vec::with_capacity(corpus.len());
    for _ in 0..p.bootstrap {
        resample.clear();
        resample.extend((0..corpus.len()).map(|_| corpus[rng.gen_range(0..corpus.len())]));
        let (a, _) = mutual_information(&resample, k, near_card, |t| t.near);
        let (b, _) = mutual_information(&resample, k, k, |t| t.far);
        diffs.push(a - b);
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64;

    Ok(MiReport {
        i_near,
        i_far,
        bootstrap_std: var.sqrt(),
        samples: corpus.len(),
        sparse_support: sparse_near || sparse_far,
    })
}

/// Plug-in mutual information in bits between the centre token and `other`,
/// with the Miller-Madow correction applied to each entropy term. Also
/// reports whether any joint cell has fewer than 5 observations.
fn mutual_information(
    corpus: &[Triple],
    k: usize,
    other_card: usize,
    other: impl Fn(&Triple) -> u32,
) -> (f64, bool) {
    let mut joint = vec![0u32; k * other_card];
    let mut cx = vec![0u32; k];
    let mut cy = vec![0u32; other_card];
    for t in corpus {
        let y = other(t) as usize;
        joint[t.centre as usize * other_card + y] += 1;
        cx[t.centre as usize] += 1;
        cy[y] += 1;
    }
    let n = corpus.len() as f64;
    let sparse = joint.iter().any(|&c| c > 0 && c < 5);
    let mi = miller_madow_entropy(&cx, n) + miller_madow_entropy(&cy, n)
        - miller_madow_entropy(&joint, n);
    (mi, sparse)
}

fn miller_madow_entropy(counts: &[u32], n: f64) -> f64 {
    let mut h = 0.0;
    let mut occupied = 0usize;
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = f64::from(c) / n;
        h -= p * p.log2();
        occupied += 1;
    }
    h + (occupied.saturating_sub(1)) as f64 / (2.0 * n * std::f64::consts::LN_2)
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{decode, DecodeConfig};
    use crate::denoiser::PlantedOracle;

    #[test]
    fn tau_grid_values() {
        let g = tau_grid(0.05);
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.05);
        assert_eq!(g[18], 0.95);
    }

    #[test]
    fn sweep_binary_rows_are_tight() {
        let rows = run_margin_sweep(&[2], &[0.2, 1.0], 0.01).unwrap();
        assert!((rows[0].bruteforce - 0.40).abs() < 1e-9);
        assert!((rows[0].bound - 0.40).abs() < 1e-12);
        assert!(rows[0].gap.abs() < 1e-9);
        assert!(rows.iter().all(|r| r.holds));
        assert_eq!(rows[1].bruteforce, 0.0);
        assert_eq!(rows[1].bound, 0.0);
    }

    #[test]
    fn sweep_flags_multiclass_rows() {
        let rows = run_margin_sweep(&[4], &[0.9], 0.01).unwrap();
        assert!((rows[0].bound - 0.05).abs() < 1e-12);
        // Three classes share the residual mass: (0.93, 0.03, 0.02, 0.02).
        assert!((rows[0].bruteforce - 0.07).abs() < 1e-9);
        assert!(!rows[0].holds);
    }

    #[test]
    fn sweep_rejects_empty_ranges() {
        assert!(run_margin_sweep(&[], &[0.1], 0.01).is_err());
        assert!(run_margin_sweep(&[2], &[], 0.01).is_err());
    }

    fn demo_trace() -> (Vec<StepRecord>, DecodeConfig) {
        let cfg = DecodeConfig {
            height: 8,
            width: 8,
            ..DecodeConfig::demo()
        };
        let target = vec![3; 64];
        let mut d = PlantedOracle::new(target, 16, 0.3, 0.08, cfg.kernel).unwrap();
        (decode(&mut d, &cfg).unwrap().trace, cfg)
    }

    #[test]
    fn decoder_traces_pass() {
        let (trace, cfg) = demo_trace();
        assert_eq!(
            check_trace_consistency(&trace, &cfg.schedule, 64).unwrap(),
            TraceCheck::Pass
        );
    }

    #[test]
    fn perturbed_t_eff_fails_at_that_record() {
        let (mut trace, cfg) = demo_trace();
        trace[1].t_eff += 0.05;
        match check_trace_consistency(&trace, &cfg.schedule, 64).unwrap() {
            TraceCheck::Fail { record, .. } => assert_eq!(record, 1),
            TraceCheck::Pass => panic!("perturbation not detected"),
        }
    }

    #[test]
    fn empty_trace_rejected() {
        let s = Schedule::cosine(4).unwrap();
        assert!(matches!(
            check_trace_consistency(&[], &s, 4),
            Err(LadrError::InvalidInput(_))
        ));
    }

    #[test]
    fn mi_rejects_aliasing_and_small_grids() {
        let p = MiParams {
            d_far: 1,
            ..MiParams::default()
        };
        assert!(matches!(mi_locality_check(&p), Err(LadrError::InvalidInput(_))));
        let p = MiParams {
            height: 8,
            ..MiParams::default()
        };
        assert!(mi_locality_check(&p).is_err());
    }

    #[test]
    fn mi_small_run_orders_near_over_far() {
        let p = MiParams {
            vocab_size: 2,
            beta: 1.2,
            height: 9,
            width: 9,
            samples: 4000,
            d_far: 4,
            sweeps: 16,
            bootstrap: 50,
            seed: 5,
        };
        let r = mi_locality_check(&p).unwrap();
        assert!(r.i_near >= -MI_NOISE_FLOOR && r.i_far >= -MI_NOISE_FLOOR);
        assert!(r.near_dominates(), "{r:?}");
    }

    #[test]
    fn mi_zero_coupling_is_negligible() {
        let p = MiParams {
            vocab_size: 2,
            beta: 0.0,
            height: 9,
            width: 9,
            samples: 4000,
            d_far: 4,
            sweeps: 1,
            bootstrap: 50,
            seed: 5,
        };
        let r = mi_locality_check(&p).unwrap();
        assert!(r.both_negligible(), "{r:?}");
    }

    #[test]
    fn mi_independent_of_thread_count() {
        let p = MiParams {
            vocab_size: 2,
            beta: 0.8,
            height: 5,
            width: 5,
            samples: 1000,
            d_far: 2,
            sweeps: 4,
            bootstrap: 10,
            seed: 1,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mi_locality_check(&p).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| mi_locality_check(&p).unwrap());
        assert_eq!(one, many);
    }
}
