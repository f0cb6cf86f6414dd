//! Experiment configuration, orchestration and the persisted formats: JSONL
//! decode traces, the summary CSV and PPM renderings.

mod config;
mod experiment;
mod render;
mod trace;

pub use config::{DenoiserSpec, ExperimentConfig};
pub use experiment::{run_experiment, run_single, write_summary_csv, ExperimentOutput, SummaryRow, SUMMARY_HEADER};
pub use render::{palette_color, render_grid, write_ppm, PALETTE};
pub use trace::{read_trace, replay_trace, write_trace, TraceHeader, TRACE_FORMAT_VERSION};
