//! The denoiser contract and its synthetic backends.
//!
//! A denoiser maps the current token sequence and mask to one categorical
//! posterior per position. All backends return one-hot rows at observed
//! positions.

mod planted;
mod potts;
mod replay;

pub use planted::PlantedOracle;
pub use potts::{gibbs_sample_potts, PottsConditional};
pub use replay::{ReplayDenoiser, ReplayHeader, ReplayWriter};

use crate::error::{LadrError, Result};
use crate::grid::MaskGrid;
use crate::schedule::Timestep;
use crate::selection::validate_row;

/// Tokens in `[0, vocab_size)` plus a `mask_id` sentinel outside that range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    tokens: Vec<u32>,
    vocab_size: usize,
    mask_id: u32,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, vocab_size: usize, mask_id: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(LadrError::InvalidInput("vocabulary must be non-empty".into()));
        }
        if (mask_id as usize) < vocab_size {
            return Err(LadrError::InvalidInput(format!(
                "mask id {mask_id} collides with vocabulary of size {vocab_size}"
            )));
        }
        if let Some(bad) = tokens
            .iter()
            .find(|&&t| t != mask_id && t as usize >= vocab_size)
        {
            return Err(LadrError::InvalidInput(format!(
                "token {bad} outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(TokenSequence {
            tokens,
            vocab_size,
            mask_id,
        })
    }

    pub fn fully_masked(n: usize, vocab_size: usize, mask_id: u32) -> Result<Self> {
        TokenSequence::new(vec![mask_id; n], vocab_size, mask_id)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn mask_id(&self) -> u32 {
        self.mask_id
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.tokens[i] == self.mask_id
    }

    pub fn mask_flags(&self) -> Vec<bool> {
        self.tokens.iter().map(|&t| t == self.mask_id).collect()
    }

    pub fn is_fully_decoded(&self) -> bool {
        !self.tokens.contains(&self.mask_id)
    }

    pub(crate) fn set(&mut self, i: usize, token: u32) {
        debug_assert!((token as usize) < self.vocab_size);
        self.tokens[i] = token;
    }
}

/// One categorical distribution per position, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBatch {
    positions: usize,
    vocab_size: usize,
    probs: Vec<f64>,
}

impl PosteriorBatch {
    pub fn new(positions: usize, vocab_size: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != positions * vocab_size {
            return Err(LadrError::Format(format!(
                "posterior has {} entries, expected {positions} x {vocab_size}",
                probs.len()
            )));
        }
        if vocab_size == 0 {
            return Err(LadrError::Format("posterior with empty vocabulary".into()));
        }
        for row in probs.chunks(vocab_size) {
            validate_row(row)?;
        }
        Ok(PosteriorBatch {
            positions,
            vocab_size,
            probs,
        })
    }

    /// Caller guarantees every row is a valid distribution.
    pub(crate) fn from_valid(positions: usize, vocab_size: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), positions * vocab_size);
        PosteriorBatch {
            positions,
            vocab_size,
            probs,
        }
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.vocab_size)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.probs
    }
}

/// Behavioural contract of a pretrained masked denoiser.
///
/// Implementations must be deterministic for identical inputs; stochastic
/// backends take their seed at construction.
pub trait Denoiser {
    fn vocab_size(&self) -> usize;

    /// Number of positions the backend is bound to, when it is fixed.
    fn positions(&self) -> Option<usize> {
        None
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        t: Timestep,
    ) -> Result<PosteriorBatch>;
}

impl<D: Denoiser + ?Sized> Denoiser for &mut D {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn positions(&self) -> Option<usize> {
        (**self).positions()
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        t: Timestep,
    ) -> Result<PosteriorBatch> {
        (**self).predict(tokens, mask, t)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn positions(&self) -> Option<usize> {
        (**self).positions()
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        t: Timestep,
    ) -> Result<PosteriorBatch> {
        (**self).predict(tokens, mask, t)
    }
}

pub(crate) fn check_inputs(
    tokens: &TokenSequence,
    mask: &MaskGrid,
    vocab_size: usize,
) -> Result<()> {
    if tokens.len() != mask.len() {
        return Err(LadrError::Config(format!(
            "token sequence of length {} does not match {}x{} grid",
            tokens.len(),
            mask.height(),
            mask.width()
        )));
    }
    if tokens.vocab_size() != vocab_size {
        return Err(LadrError::Config(format!(
            "denoiser vocabulary {vocab_size} does not match sequence vocabulary {}",
            tokens.vocab_size()
        )));
    }
    Ok(())
}

/// Overwrite row `i` with a one-hot on `token`.
pub(crate) fn one_hot(row: &mut [f64], token: u32) {
    row.fill(0.0);
    row[token as usize] = 1.0;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_sequence_validation() {
        assert!(TokenSequence::new(vec![0, 1, 4], 4, 4).is_ok());
        assert!(TokenSequence::new(vec![0, 5], 4, 4).is_err());
        assert!(TokenSequence::new(vec![0], 4, 2).is_err());
        let s = TokenSequence::fully_masked(3, 4, 9).unwrap();
        assert_eq!(s.mask_flags(), vec![true; 3]);
        assert!(!s.is_fully_decoded());
    }

    #[test]
    fn posterior_validation() {
        assert!(PosteriorBatch::new(2, 2, vec![0.5, 0.5, 1.0, 0.0]).is_ok());
        assert!(matches!(
            PosteriorBatch::new(2, 2, vec![0.5, 0.5]),
            Err(LadrError::Format(_))
        ));
        assert!(PosteriorBatch::new(1, 2, vec![0.7, 0.7]).is_err());
    }
}
