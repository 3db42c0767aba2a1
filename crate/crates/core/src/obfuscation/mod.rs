//! Datapath obfuscation: affine Feistel network, address obfuscation,
//! re-keying via an LFSR and remapping between key epochs.

mod address;
mod affine;
mod feistel;
mod lfsr;

use thiserror::Error;

pub use address::{deobfuscate_address, obfuscate_address, AddressGeometry, TAGSET_BITS};
pub use affine::{AffineSpec, DEFAULT_AFFINE_SEED, DEFAULT_AFFINE_VERSION};
pub use feistel::{
    deobfuscate32, deobfuscate64, obfuscate32, obfuscate64, remap, remap64, RoundKeys, ROUNDS,
};
pub use lfsr::{next_round_keys, Lfsr, DEFAULT_TAPS};

#[derive(Debug, Error)]
pub enum ObfuscationError {
    #[error("LFSR state must be non-zero")]
    ZeroLfsrState,
    #[error("address {addr:#x} does not fit in {width} bits")]
    AddressOutOfRange { addr: u64, width: u32 },
    #[error("invalid address geometry: {0}")]
    Geometry(String),
    #[error("invalid affine spec: {0}")]
    AffineSpec(String),
}
