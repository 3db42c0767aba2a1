//! Side-channel leakage analysis: waveform ingest, per-module SVF scoring,
//! Feistel data/address obfuscation, a toy in-order core running AES-128, and
//! correlation power analysis.

mod bits;

pub mod aes;
pub mod dpa;
pub mod formats;
pub mod ingest;
pub mod metrics;
pub mod obfuscation;
pub mod report;
pub mod seed;
pub mod sim;

pub use bits::BitVec;
