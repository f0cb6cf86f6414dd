use crate::error::{LadrError, Result};
use crate::grid::{Kernel, MaskGrid};
use crate::schedule::Timestep;

use super::{check_inputs, one_hot, Denoiser, PosteriorBatch, TokenSequence};

/// Cap on the target probability; keeps every masked row away from one-hot.
pub const PLANTED_MAX_CONFIDENCE: f64 = 0.999;

/// Synthetic denoiser whose confidence in a fixed target token grows linearly
/// with the number of observed cells around each masked position.
///
/// At a masked position with `n` observed neighbours the target gets
/// `min(0.999, base + gain * n)`; the remainder is spread uniformly over the
/// other `K - 1` tokens. The timestep is ignored.
#[derive(Debug, Clone)]
pub struct PlantedOracle {
    target: Vec<u32>,
    vocab_size: usize,
    base: f64,
    gain: f64,
    kernel: Kernel,
}

impl PlantedOracle {
    pub fn new(
        target: Vec<u32>,
        vocab_size: usize,
        base: f64,
        gain: f64,
        kernel: Kernel,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(LadrError::Config(format!(
                "planted oracle needs at least 2 tokens, got {vocab_size}"
            )));
        }
        if !(base >= 0.0 && gain >= 0.0) {
            return Err(LadrError::Config(format!(
                "planted oracle base {base} and gain {gain} must be >= 0"
            )));
        }
        if let Some(bad) = target.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(LadrError::Config(format!(
                "planted target contains {bad}, a mask id or out-of-vocabulary token"
            )));
        }
        Ok(PlantedOracle {
            target,
            vocab_size,
            base,
            gain,
            kernel,
        })
    }

    pub fn target(&self) -> &[u32] {
        &self.target
    }

    /// Probability assigned to the target with `n` observed neighbours.
    pub fn target_probability(&self, n: usize) -> f64 {
        (self.base + self.gain * n as f64).min(PLANTED_MAX_CONFIDENCE)
    }
}

impl Denoiser for PlantedOracle {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn positions(&self) -> Option<usize> {
        Some(self.target.len())
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        _t: Timestep,
    ) -> Result<PosteriorBatch> {
        check_inputs(tokens, mask, self.vocab_size)?;
        if tokens.len() != self.target.len() {
            return Err(LadrError::Config(format!(
                "planted target has {} positions, sequence has {}",
                self.target.len(),
                tokens.len()
            )));
        }
        let k = self.vocab_size;
        let r = self.kernel.radius();
        let mut probs = vec![0.0; tokens.len() * k];
        for (i, row) in probs.chunks_mut(k).enumerate() {
            if !mask.is_masked(i) {
                one_hot(row, tokens.tokens()[i]);
                continue;
            }
            let p = self.target_probability(mask.observed_in_window(i, r));
            row.fill((1.0 - p) / (k - 1) as f64);
            row[self.target[i] as usize] = p;
        }
        Ok(PosteriorBatch::from_valid(tokens.len(), k, probs))
    }
}
