//! Hamming power model, distance patterns, Pearson correlation, per-module
//! SVF scoring and Welch t-tests.

mod hamming;
mod pearson;
mod svf;
mod ttest;

use thiserror::Error;

pub use crate::bits::BitVec;
pub use hamming::{
    hamming_distance, hamming_weight, hd_words, pair_count, pairwise_distances, pairwise_word_distances,
    DistanceVector,
};
pub use pearson::{pearson, CoMoments};
pub use svf::{
    percentile_nearest_rank, svf_all, svf_module, svf_module_windowed, svf_noise_floor, CycleWindow, SvfEntry,
    SvfOptions, SvfReport, SvfResult,
};
pub use ttest::{pairwise_ttest_matrix, welch_t, TMatrix};

use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("width mismatch: {left} vs {right} bits")]
    WidthMismatch { left: u32, right: u32 },
    #[error("need at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input (zero variance)")]
    Degenerate,
    #[error("oracle has {oracle} values but the run set has {runs} runs")]
    OracleLength { oracle: usize, runs: usize },
    #[error("no oracle supplied")]
    NoOracle,
    #[error("empty cycle window [{start}, {end}) over {cycles} cycles")]
    EmptyWindow { start: usize, end: usize, cycles: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Ground-truth value per run at one interesting point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleTrace {
    pub values: Vec<BitVec>,
    pub label: String,
}

impl OracleTrace {
    /// Panics if the values do not share one width; see [`Self::try_new`].
    pub fn new(values: Vec<BitVec>, label: impl Into<String>) -> Self {
        Self::try_new(values, label).expect("oracle values share one width")
    }

    pub fn try_new(values: Vec<BitVec>, label: impl Into<String>) -> Result<Self, MetricsError> {
        if let Some(first) = values.first() {
            if let Some(bad) = values.iter().find(|v| v.width() != first.width()) {
                return Err(MetricsError::WidthMismatch { left: first.width(), right: bad.width() });
            }
        }
        Ok(Self { values, label: label.into() })
    }

    pub fn from_bytes(bytes: &[u8], label: impl Into<String>) -> Self {
        Self::new(bytes.iter().map(|b| BitVec::from_u64(*b as u64, 8)).collect(), label)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> u32 {
        self.values.first().map_or(0, |v| v.width())
    }
}
