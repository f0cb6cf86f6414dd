use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{decode, DecodeConfig, DecodeResult, StepRecord};
use crate::error::{LadrError, Result};

use super::config::DenoiserSpec;

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// First line of a JSONL trace: everything needed to rerun the decode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub config: DecodeConfig,
    pub denoiser: DenoiserSpec,
}

impl TraceHeader {
    pub fn new(config: DecodeConfig, denoiser: DenoiserSpec) -> Self {
        TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            config,
            denoiser,
        }
    }
}

pub fn write_trace(path: impl AsRef<Path>, header: &TraceHeader, records: &[StepRecord]) -> Result<()> {
    let path = path.as_ref();
    let io = |e| LadrError::io(path.display().to_string(), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let line = serde_json::to_string(header).expect("header serialises");
    writeln!(out, "{line}").map_err(io)?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serialises");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<(TraceHeader, Vec<StepRecord>)> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| LadrError::io(name.clone(), e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| LadrError::Format(format!("{name}: empty trace file")))?
        .map_err(|e| LadrError::io(name.clone(), e))?;
    let header: TraceHeader = serde_json::from_str(&first)
        .map_err(|e| LadrError::Format(format!("{name}: bad trace header: {e}")))?;
    if header.format_version != TRACE_FORMAT_VERSION {
        return Err(LadrError::Format(format!(
            "{name}: unsupported trace version {}",
            header.format_version
        )));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| LadrError::io(name.clone(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)
            .map_err(|e| LadrError::Format(format!("{name}: bad step record {}: {e}", i + 2)))?;
        records.push(rec);
    }
    Ok((header, records))
}

/// Rerun the decode a trace header describes and confirm it reproduces the
/// stored records.
pub fn replay_trace(header: &TraceHeader, records: &[StepRecord]) -> Result<DecodeResult> {
    let mut denoiser = header.denoiser.build(&header.config)?;
    let result = decode(&mut denoiser, &header.config)?;
    if result.trace != records {
        return Err(LadrError::Format(
            "trace does not reproduce from its header".into(),
        ));
    }
    Ok(result)
}
