use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LadrError, Result};
use crate::grid::{four_neighbors, MaskGrid};
use crate::schedule::Timestep;

use super::{check_inputs, one_hot, Denoiser, PosteriorBatch, TokenSequence};

/// Local conditionals of a ferromagnetic Potts model on the 4-neighbour lattice.
///
/// At a masked position `p(v)` is proportional to `exp(beta * c_v)` where
/// `c_v` counts observed 4-neighbours carrying token `v`. Masked neighbours
/// contribute nothing, so the row is the exact full conditional whenever all
/// four neighbours are observed.
#[derive(Debug, Clone)]
pub struct PottsConditional {
    vocab_size: usize,
    beta: f64,
}

impl PottsConditional {
    pub fn new(vocab_size: usize, beta: f64) -> Result<Self> {
        if vocab_size < 2 {
            return Err(LadrError::Config(format!(
                "Potts model needs at least 2 states, got {vocab_size}"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(LadrError::Config(format!("Potts coupling {beta} must be >= 0")));
        }
        Ok(PottsConditional { vocab_size, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Denoiser for PottsConditional {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        _t: Timestep,
    ) -> Result<PosteriorBatch> {
        check_inputs(tokens, mask, self.vocab_size)?;
        let k = self.vocab_size;
        let (h, w) = (mask.height(), mask.width());
        let mut probs = vec![0.0; tokens.len() * k];
        let mut counts = vec![0u32; k];
        for (i, row) in probs.chunks_mut(k).enumerate() {
            if !mask.is_masked(i) {
                one_hot(row, tokens.tokens()[i]);
                continue;
            }
            counts.fill(0);
            for j in four_neighbors(h, w, i) {
                if !mask.is_masked(j) {
                    counts[tokens.tokens()[j] as usize] += 1;
                }
            }
            let top = *counts.iter().max().expect("k >= 2");
            for (p, &c) in row.iter_mut().zip(&counts) {
                *p = (self.beta * (f64::from(c) - f64::from(top))).exp();
            }
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= z);
        }
        Ok(PosteriorBatch::from_valid(tokens.len(), k, probs))
    }
}

/// One grid from `sweeps` systematic-scan Gibbs sweeps over the Potts model
/// `p(z) ~ exp(beta * sum_<ij> [z_i = z_j])` on the free-boundary 4-neighbour
/// lattice, started from a uniform random configuration.
pub fn gibbs_sample_potts(
    height: usize,
    width: usize,
    vocab_size: usize,
    beta: f64,
    sweeps: usize,
    seed: u64,
) -> Result<TokenSequence> {
    if height == 0 || width == 0 {
        return Err(LadrError::InvalidInput("grid dimensions must be positive".into()));
    }
    if sweeps == 0 {
        return Err(LadrError::InvalidInput("need at least one sweep".into()));
    }
    PottsConditional::new(vocab_size, beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = height * width;
    let mut z: Vec<u32> = (0..n).map(|_| rng.gen_range(0..vocab_size as u32)).collect();
    // Boltzmann weights for 0..=4 agreeing neighbours.
    let boltz: Vec<f64> = (0..=4).map(|c| (beta * c as f64).exp()).collect();
    let mut counts = vec![0usize; vocab_size];
    let mut weights = vec![0.0; vocab_size];
    for _ in 0..sweeps {
        for i in 0..n {
            counts.fill(0);
            for j in four_neighbors(height, width, i) {
                counts[z[j] as usize] += 1;
            }
            for (wgt, &c) in weights.iter_mut().zip(&counts) {
                *wgt = boltz[c];
            }
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut pick = vocab_size - 1;
            for (v, &wgt) in weights.iter().enumerate() {
                if u < wgt {
                    pick = v;
                    break;
                }
                u -= wgt;
            }
            z[i] = pick as u32;
        }
    }
    TokenSequence::new(z, vocab_size, vocab_size as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_conditional() {
        // 1x3 row: observed 0 | masked | observed 0.
        let mask = MaskGrid::from_flat(vec![false, true, false], 1, 3).unwrap();
        let seq = TokenSequence::new(vec![0, 2, 0], 2, 2).unwrap();
        let mut p = PottsConditional::new(2, 1.0).unwrap();
        let post = p.predict(&seq, &mask, Timestep::new(0.0)).unwrap();
        let e2 = 1f64.exp().powi(2);
        assert!((post.row(1)[0] - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((post.row(1)[0] - 0.88080).abs() < 1e-5);
        assert_eq!(post.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn uniform_without_observed_neighbors_or_coupling() {
        let mask = MaskGrid::filled(2, 2, true).unwrap();
        let seq = TokenSequence::fully_masked(4, 4, 4).unwrap();
        let mut p = PottsConditional::new(4, 2.0).unwrap();
        let post = p.predict(&seq, &mask, Timestep::new(0.0)).unwrap();
        assert!(post.rows().all(|r| r.iter().all(|&x| (x - 0.25).abs() < 1e-12)));

        let mask = MaskGrid::from_flat(vec![false, true, false, false], 2, 2).unwrap();
        let seq = TokenSequence::new(vec![1, 4, 1, 1], 4, 4).unwrap();
        let mut zero = PottsConditional::new(4, 0.0).unwrap();
        let post = zero.predict(&seq, &mask, Timestep::new(0.0)).unwrap();
        assert!(post.row(1).iter().all(|&x| (x - 0.25).abs() < 1e-12));
    }

    /// Joint Potts weight of a full 2x2 configuration.
    fn joint_weight(z: &[u32], beta: f64) -> f64 {
        let bonds = [(0, 1), (2, 3), (0, 2), (1, 3)];
        let agree = bonds.iter().filter(|(a, b)| z[*a] == z[*b]).count();
        (beta * agree as f64).exp()
    }

    #[test]
    fn matches_bruteforce_full_conditionals_on_2x2() {
        let k = 3u32;
        let beta = 0.9;
        let mut model = PottsConditional::new(k as usize, beta).unwrap();
        for masked in 0..4 {
            for code in 0..k.pow(3) {
                // Assign the three observed cells from `code`.
                let mut z = vec![0u32; 4];
                let mut c = code;
                for (cell, slot) in z.iter_mut().enumerate() {
                    if cell != masked {
                        *slot = c % k;
                        c /= k;
                    }
                }
                let weights: Vec<f64> = (0..k)
                    .map(|v| {
                        let mut zz = z.clone();
                        zz[masked] = v;
                        joint_weight(&zz, beta)
                    })
                    .collect();
                let total: f64 = weights.iter().sum();

                let mut toks = z.clone();
                toks[masked] = k;
                let mut flags = vec![false; 4];
                flags[masked] = true;
                let grid = MaskGrid::from_flat(flags, 2, 2).unwrap();
                let seq = TokenSequence::new(toks, k as usize, k).unwrap();
                let post = model.predict(&seq, &grid, Timestep::new(0.3)).unwrap();
                for v in 0..k as usize {
                    assert!((post.row(masked)[v] - weights[v] / total).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gibbs_is_deterministic() {
        let a = gibbs_sample_potts(8, 8, 3, 1.0, 10, 42).unwrap();
        let b = gibbs_sample_potts(8, 8, 3, 1.0, 10, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_fully_decoded());
        assert_ne!(a, gibbs_sample_potts(8, 8, 3, 1.0, 10, 43).unwrap());
    }

    #[test]
    fn gibbs_zero_coupling_is_uniform() {
        // Chi-square over 10^4 tokens, 3 degrees of freedom; 11.345 is the
        // 0.99 quantile.
        let k = 4;
        let mut counts = [0f64; 4];
        for seed in 0..100 {
            let g = gibbs_sample_potts(10, 10, k, 0.0, 1, seed).unwrap();
            for &t in g.tokens() {
                counts[t as usize] += 1.0;
            }
        }
        let expected = 10_000.0 / k as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        assert!(chi2 < 11.345, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn gibbs_strong_coupling_orders() {
        // Larger free-boundary lattices freeze into stripes from a random start
        // at this coupling; 4x4 escapes them.
        let trials = 100;
        let ordered = (0..trials)
            .filter(|&seed| {
                let g = gibbs_sample_potts(4, 4, 2, 5.0, 200, seed).unwrap();
                let ones = g.tokens().iter().filter(|&&t| t == 1).count();
                let majority = ones.max(16 - ones) as f64 / 16.0;
                majority > 0.9
            })
            .count();
        assert!(ordered as f64 / trials as f64 > 0.95, "ordered in {ordered}/{trials}");
    }
}
