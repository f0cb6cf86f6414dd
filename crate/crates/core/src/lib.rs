//! Locality-aware dynamic rescue (LADR) decoding for masked discrete diffusion
//! over 2D token grids.
//!
//! The crate is organised bottom-up:
//!
//! - [`schedule`]: masking schedule, its closed-form inverse and timestep arithmetic
//! - [`grid`]: mask grids, morphological dilation and frontier extraction
//! - [`selection`]: confidence margins, scheduled unmasking, frontier rescue and
//!   the ablation selectors
//! - [`policy`]: phase-aware `(alpha, tau)` policy keyed by effective timestep
//! - [`denoiser`]: the denoiser contract with planted-oracle, Potts and replay backends
//! - [`decoder`]: the decode loop producing tokens plus a per-step trace
//! - [`verify`]: brute-force and statistical oracles for the margin bound, the
//!   locality information gain and trace consistency
//! - [`harness`]: experiment configuration, orchestration and persisted formats

pub mod decoder;
pub mod denoiser;
pub mod error;
pub mod grid;
pub mod harness;
pub mod policy;
pub mod schedule;
pub mod selection;
pub mod verify;

pub use decoder::{
    decode, decode_from, decode_with_observer, sample_row, sample_tokens, DecodeConfig,
    DecodeResult, SamplingMode, StepDetail, StepRecord, Strategy,
};
pub use denoiser::{
    Denoiser, PlantedOracle, PosteriorBatch, PottsConditional, ReplayDenoiser, ReplayWriter,
    TokenSequence,
};
pub use error::{LadrError, Result};
pub use grid::{Kernel, MaskGrid};
pub use policy::{Phase, PhasePolicy};
pub use schedule::{MaskFraction, Schedule, ScheduleKind, Timestep};
pub use selection::{AblationKind, TokenDistribution};

/// Absolute slack added before flooring a real-valued count so that products
/// such as `0.29 * 100` land on the integer they denote.
pub(crate) const COUNT_EPS: f64 = 1e-9;

pub(crate) fn floor_count(x: f64) -> usize {
    if x <= 0.0 || !x.is_finite() {
        0
    } else {
        (x + COUNT_EPS).floor() as usize
    }
}
