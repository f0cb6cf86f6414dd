use std::fs::{self, File};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::decoder::{decode, DecodeResult, Strategy};
use crate::error::{LadrError, Result};

use super::config::{DenoiserSpec, ExperimentConfig};
use super::trace::{write_trace, TraceHeader};

pub const SUMMARY_HEADER: &str = "strategy,seed,H,W,K,T,nfe,steps,token_accuracy,rescued_total,wall_ms";

/// One line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "K")]
    pub vocab_size: usize,
    #[serde(rename = "T")]
    pub steps: u32,
    pub nfe: u32,
    /// Scheduled loop iterations, excluding a forced final forward.
    #[serde(rename = "steps")]
    pub loop_steps: u32,
    pub token_accuracy: Option<f64>,
    pub rescued_total: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// Sorted by `(strategy, seed)`.
    pub rows: Vec<SummaryRow>,
    pub trace_paths: Vec<PathBuf>,
    pub summary_path: PathBuf,
}

/// One decode of `strategy` at `seed`, plus its summary row.
pub fn run_single(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<(TraceHeader, DecodeResult, SummaryRow)> {
    let dc = cfg.decode_config(strategy, seed)?;
    let mut denoiser = cfg.denoiser.build(&dc)?;
    let result = decode(&mut denoiser, &dc)?;
    let accuracy = cfg.denoiser.target(&dc).map(|target| {
        let hits = target
            .iter()
            .zip(result.tokens.tokens())
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / target.len() as f64
    });
    let row = SummaryRow {
        strategy,
        seed,
        height: dc.height,
        width: dc.width,
        vocab_size: dc.vocab_size,
        steps: dc.schedule.steps,
        nfe: result.nfe,
        loop_steps: result.trace.len().min(dc.schedule.steps as usize) as u32,
        token_accuracy: accuracy,
        rescued_total: result.rescued_total(),
        wall_ms: result.wall_ms,
    };
    let header = TraceHeader::new(dc, cfg.denoiser.clone());
    Ok((header, result, row))
}

pub fn trace_file_name(strategy: Strategy, seed: u64) -> String {
    format!("{strategy}_seed{seed}.jsonl")
}

/// Every `(strategy, repeat)` decode, one trace file each, and a summary CSV
/// sorted by `(strategy, seed)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if let DenoiserSpec::Replay { path } = &cfg.denoiser {
        if !path.exists() {
            return Err(LadrError::io(
                path.display().to_string(),
                std::io::Error::new(std::io::ErrorKind::NotFound, "replay file not found"),
            ));
        }
    }
    let dir = &cfg.output_dir;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces).map_err(|e| LadrError::io(traces.display().to_string(), e))?;
    let summary_path = dir.join("summary.csv");
    // Fail on an unwritable destination before spending any compute.
    File::create(&summary_path).map_err(|e| LadrError::io(summary_path.display().to_string(), e))?;

    let mut jobs: Vec<(Strategy, u64)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| (0..cfg.repeats).map(move |r| (s, cfg.seed + u64::from(r))))
        .collect();
    jobs.sort_by(|a, b| a.0.name().cmp(b.0.name()).then(a.1.cmp(&b.1)));
    jobs.dedup();

    let done: Vec<(SummaryRow, PathBuf)> = jobs
        .par_iter()
        .map(|&(strategy, seed)| {
            let (header, result, row) = run_single(cfg, strategy, seed)?;
            let path = traces.join(trace_file_name(strategy, seed));
            write_trace(&path, &header, &result.trace)?;
            Ok((row, path))
        })
        .collect::<Result<_>>()?;
    let (rows, trace_paths): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    write_summary_csv(&summary_path, &rows)?;
    Ok(ExperimentOutput {
        rows,
        trace_paths,
        summary_path,
    })
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| LadrError::io(name.clone(), e.into()))?;
    w.write_record(SUMMARY_HEADER.split(','))
        .map_err(|e| LadrError::io(name.clone(), e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| LadrError::io(name.clone(), e.into()))?;
    }
    w.flush().map_err(|e| LadrError::io(name, e))
}
