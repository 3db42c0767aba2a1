//! 64-bit Fibonacci LFSR used as the internal key source.

use serde::{Deserialize, Serialize};

use super::{ObfuscationError, RoundKeys};

/// Taps 64, 63, 61, 60 (x^64 + x^63 + x^61 + x^60 + 1), a maximal-length
/// polynomial. Bit `n - 1` of the mask corresponds to tap `n`.
pub const DEFAULT_TAPS: u64 = (1 << 63) | (1 << 62) | (1 << 60) | (1 << 59);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lfsr {
    state: u64,
    taps: u64,
    epoch: u64,
}

impl Lfsr {
    pub fn new(seed: u64) -> Result<Self, ObfuscationError> {
        Self::with_taps(seed, DEFAULT_TAPS)
    }

    pub fn with_taps(seed: u64, taps: u64) -> Result<Self, ObfuscationError> {
        if seed == 0 {
            return Err(ObfuscationError::ZeroLfsrState);
        }
        Ok(Self { state: seed, taps, epoch: 0 })
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Number of key draws taken so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Shifts once and returns the output bit (the bit shifted out).
    #[inline]
    pub fn step(&mut self) -> u8 {
        let feedback = (self.state & self.taps).count_ones() as u64 & 1;
        let out = (self.state >> 63) as u8;
        self.state = (self.state << 1) | feedback;
        out
    }

    /// Draws 64 output bits, first bit most significant.
    pub fn next_u64(&mut self) -> u64 {
        (0..64).fold(0u64, |acc, _| (acc << 1) | self.step() as u64)
    }
}

/// Draws the next set of round keys. `keys[0]` takes the first 16 output bits.
pub fn next_round_keys(lfsr: &Lfsr) -> (RoundKeys, Lfsr) {
    let mut next = *lfsr;
    let bits = next.next_u64();
    next.epoch += 1;
    let keys = [
        (bits >> 48) as u16,
        (bits >> 32) as u16,
        (bits >> 16) as u16,
        bits as u16,
    ];
    (RoundKeys { keys, epoch: next.epoch }, next)
}
