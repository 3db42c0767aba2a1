//! Waveform ingest: VCD parsing, module hierarchy, per-cycle resampling and
//! aligned run sets.

mod resample;
mod runset;
mod vcd;

use std::path::PathBuf;

use thiserror::Error;

pub use resample::{module_word_series, resample_per_cycle, CycleMatrix, WordSeries};
pub use runset::{
    load_run_set, load_run_set_manifest, parse_vcd_manifest, read_vcd_manifest, Alignment, ManifestEntry,
    RunSet,
};
pub use vcd::{parse_vcd, ModuleNode, SignalDecl, ValueChange, WaveDump};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: value change for undeclared id code {id:?}")]
    UndeclaredId { line: usize, id: String },
    #[error("truncated stream (last good timestamp: {})", last_time.map_or("none".to_string(), |t| t.to_string()))]
    Truncated { last_time: Option<u64> },
    #[error("clock signal {0:?} not found")]
    ClockNotFound(String),
    #[error("clock signal {0:?} has no rising edge")]
    NoClockEdges(String),
    #[error("module {0:?} owns no signals")]
    EmptyModule(String),
    #[error("a run set needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("run {run} has a different hierarchy than run 0")]
    HierarchyMismatch { run: usize },
    #[error("run {run} has {found} cycles, expected {expected}")]
    LengthMismatch { run: usize, expected: usize, found: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    InFile { path: PathBuf, source: Box<IngestError> },
}
