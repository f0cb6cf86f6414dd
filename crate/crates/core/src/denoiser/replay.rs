//! Step-ordered posterior replay.
//!
//! File layout, one JSON object per line:
//!
//! ```text
//! {"version":1,"N":4,"K":2,"T":8}
//! {"step":0,"probs":[...N*K reals, row-major...]}
//! {"step":1,"probs":[...]}
//! ```
//!
//! Records are consumed forward-only, one per `predict` call.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LadrError, Result};
use crate::grid::MaskGrid;
use crate::schedule::Timestep;

use super::{check_inputs, one_hot, Denoiser, PosteriorBatch, TokenSequence};

pub const REPLAY_VERSION: u32 = 1;

/// Rows whose sums stray further than this from 1 are rejected; closer rows
/// are renormalised.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub version: u32,
    #[serde(rename = "N")]
    pub positions: usize,
    #[serde(rename = "K")]
    pub vocab_size: usize,
    #[serde(rename = "T")]
    pub steps: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRecordLine {
    step: u64,
    probs: Vec<f64>,
}

pub struct ReplayDenoiser {
    source: String,
    reader: Box<dyn BufRead + Send>,
    header: ReplayHeader,
    next_step: u64,
    line: String,
}

impl std::fmt::Debug for ReplayDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReplayDenoiser")
            .field("source", &self.source)
            .field("header", &self.header)
            .field("next_step", &self.next_step)
            .finish()
    }
}

impl ReplayDenoiser {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| LadrError::io(path.display().to_string(), e))?;
        ReplayDenoiser::from_reader(BufReader::new(file), path.display().to_string())
    }

    pub fn from_reader(reader: impl BufRead + Send + 'static, source: impl Into<String>) -> Result<Self> {
        let mut reader: Box<dyn BufRead + Send> = Box::new(reader);
        let source = source.into();
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| LadrError::io(source.clone(), e))?;
        let header: ReplayHeader = serde_json::from_str(line.trim())
            .map_err(|e| LadrError::Format(format!("{source}: bad replay header: {e}")))?;
        if header.version != REPLAY_VERSION {
            return Err(LadrError::Format(format!(
                "{source}: unsupported replay version {}",
                header.version
            )));
        }
        if header.vocab_size == 0 || header.positions == 0 {
            return Err(LadrError::Format(format!("{source}: empty replay dimensions")));
        }
        Ok(ReplayDenoiser {
            source,
            reader,
            header,
            next_step: 0,
            line,
        })
    }

    pub fn header(&self) -> ReplayHeader {
        self.header
    }

    fn next_record(&mut self) -> Result<StepRecordLine> {
        loop {
            self.line.clear();
            let read = self
                .reader
                .read_line(&mut self.line)
                .map_err(|e| LadrError::io(self.source.clone(), e))?;
            if read == 0 {
                return Err(LadrError::ReplayExhausted(format!(
                    "{}: no record for step {}",
                    self.source, self.next_step
                )));
            }
            if !self.line.trim().is_empty() {
                break;
            }
        }
        let rec: StepRecordLine = serde_json::from_str(self.line.trim()).map_err(|e| {
            LadrError::Format(format!("{}: bad step record: {e}", self.source))
        })?;
        if rec.step != self.next_step {
            return Err(LadrError::ReplayExhausted(format!(
                "{}: expected step {}, found step {}",
                self.source, self.next_step, rec.step
            )));
        }
        self.next_step += 1;
        Ok(rec)
    }
}

impl Denoiser for ReplayDenoiser {
    fn vocab_size(&self) -> usize {
        self.header.vocab_size
    }

    fn positions(&self) -> Option<usize> {
        Some(self.header.positions)
    }

    fn predict(
        &mut self,
        tokens: &TokenSequence,
        mask: &MaskGrid,
        _t: Timestep,
    ) -> Result<PosteriorBatch> {
        check_inputs(tokens, mask, self.header.vocab_size)?;
        if tokens.len() != self.header.positions {
            return Err(LadrError::Format(format!(
                "{}: replay holds {} positions, sequence has {}",
                self.source,
                self.header.positions,
                tokens.len()
            )));
        }
        let step = self.next_step;
        let mut rec = self.next_record()?;
        let k = self.header.vocab_size;
        if rec.probs.len() != self.header.positions * k {
            return Err(LadrError::Format(format!(
                "{}: step {step} holds {} values, expected {} x {k}",
                self.source,
                rec.probs.len(),
                self.header.positions
            )));
        }
        for (i, row) in rec.probs.chunks_mut(k).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(LadrError::Format(format!(
                    "{}: step {step} row {i} has negative or non-finite entries",
                    self.source
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(LadrError::Format(format!(
                    "{}: step {step} row {i} sums to {sum}",
                    self.source
                )));
            }
            if mask.is_masked(i) {
                row.iter_mut().for_each(|p| *p /= sum);
            } else {
                one_hot(row, tokens.tokens()[i]);
            }
        }
        Ok(PosteriorBatch::from_valid(tokens.len(), k, rec.probs))
    }
}

/// Writes replay files; steps are numbered from 0 in call order.
pub struct ReplayWriter<W: Write> {
    out: W,
    header: ReplayHeader,
    step: u64,
}

impl ReplayWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, positions: usize, vocab_size: usize, steps: u32) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| LadrError::io(path.display().to_string(), e))?;
        ReplayWriter::new(BufWriter::new(file), positions, vocab_size, steps)
    }
}

impl<W: Write> ReplayWriter<W> {
    pub fn new(mut out: W, positions: usize, vocab_size: usize, steps: u32) -> Result<Self> {
        let header = ReplayHeader {
            version: REPLAY_VERSION,
            positions,
            vocab_size,
            steps,
        };
        let line = serde_json::to_string(&header).expect("header serialises");
        writeln!(out, "{line}").map_err(|e| LadrError::io("replay", e))?;
        Ok(ReplayWriter { out, header, step: 0 })
    }

    pub fn write_step(&mut self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.header.positions * self.header.vocab_size {
            return Err(LadrError::Format(format!(
                "step of {} values does not match {} x {}",
                probs.len(),
                self.header.positions,
                self.header.vocab_size
            )));
        }
        let rec = StepRecordLine {
            step: self.step,
            probs: probs.to_vec(),
        };
        let line = serde_json::to_string(&rec).expect("record serialises");
        writeln!(self.out, "{line}").map_err(|e| LadrError::io("replay", e))?;
        self.step += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| LadrError::io("replay", e))?;
        Ok(self.out)
    }
}
