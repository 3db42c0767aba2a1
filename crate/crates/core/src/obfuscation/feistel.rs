//! Four-round Feistel obfuscation of 32-bit words.
//!
//! Every round maps `(L, R)` to `(R, L ^ F(R, k_i))`; the output after round
//! four is `L || R` with no extra swap. The inverse walks the rounds backwards
//! with the keys in reverse order.

use serde::{Deserialize, Serialize};

use super::AffineSpec;

pub const ROUNDS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoundKeys {
    pub keys: [u16; ROUNDS],
    /// Rotation counter; 0 for keys that did not come from an LFSR draw.
    pub epoch: u64,
}

impl RoundKeys {
    pub fn new(keys: [u16; ROUNDS]) -> Self {
        Self { keys, epoch: 0 }
    }
}

#[inline]
pub fn obfuscate32(x: u32, keys: &RoundKeys, spec: &AffineSpec) -> u32 {
    let mut left = (x >> 16) as u16;
    let mut right = x as u16;
    for &k in &keys.keys {
        let next_right = left ^ spec.apply(right, k);
        left = right;
        right = next_right;
    }
    ((left as u32) << 16) | right as u32
}

#[inline]
pub fn deobfuscate32(x: u32, keys: &RoundKeys, spec: &AffineSpec) -> u32 {
    let mut left = (x >> 16) as u16;
    let mut right = x as u16;
    for &k in keys.keys.iter().rev() {
        let prev_left = right ^ spec.apply(left, k);
        right = left;
        left = prev_left;
    }
    ((left as u32) << 16) | right as u32
}

/// Re-encrypts an obfuscated word from `old` keys to `new` keys.
#[inline]
pub fn remap(d_prime: u32, old: &RoundKeys, new: &RoundKeys, spec: &AffineSpec) -> u32 {
    obfuscate32(deobfuscate32(d_prime, old, spec), new, spec)
}

/// 64-bit payloads are two independent 32-bit halves under the same keys.
#[inline]
pub fn obfuscate64(x: u64, keys: &RoundKeys, spec: &AffineSpec) -> u64 {
    let hi = obfuscate32((x >> 32) as u32, keys, spec) as u64;
    let lo = obfuscate32(x as u32, keys, spec) as u64;
    (hi << 32) | lo
}

#[inline]
pub fn deobfuscate64(x: u64, keys: &RoundKeys, spec: &AffineSpec) -> u64 {
    let hi = deobfuscate32((x >> 32) as u32, keys, spec) as u64;
    let lo = deobfuscate32(x as u32, keys, spec) as u64;
    (hi << 32) | lo
}

#[inline]
pub fn remap64(x: u64, old: &RoundKeys, new: &RoundKeys, spec: &AffineSpec) -> u64 {
    obfuscate64(deobfuscate64(x, old, spec), new, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_round_function_is_four_swaps() {
        let spec = AffineSpec::zero();
        let keys = RoundKeys::new([1, 2, 3, 4]);
        assert_eq!(obfuscate32(0, &keys, &spec), 0);
        assert_eq!(obfuscate32(0x1234_5678, &keys, &spec), 0x1234_5678);
    }

    #[test]
    fn inverse_with_wrong_keys_differs() {
        let spec = AffineSpec::default_v1();
        let good = RoundKeys::new([0x1111, 0x2222, 0x3333, 0x4444]);
        let bad = RoundKeys::new([0x1111, 0x2222, 0x3333, 0x4445]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mismatches = 0;
        for _ in 0..256 {
            let x: u32 = rng.random();
            let y = obfuscate32(x, &good, &spec);
            assert_eq!(deobfuscate32(y, &good, &spec), x);
            if deobfuscate32(y, &bad, &spec) != x {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 256);
    }

    #[test]
    fn remap_same_keys_is_identity() {
        let spec = AffineSpec::default_v1();
        let keys = RoundKeys::new([9, 8, 7, 6]);
        for x in [0u32, 1, 0xDEAD_BEEF, u32::MAX] {
            assert_eq!(remap(x, &keys, &keys, &spec), x);
        }
    }

    #[test]
    fn halves_are_independent() {
        let spec = AffineSpec::default_v1();
        let keys = RoundKeys::new([5, 6, 7, 8]);
        let a = obfuscate64(0x0000_0001_0000_0002, &keys, &spec);
        assert_eq!(a >> 32, obfuscate32(1, &keys, &spec) as u64);
        assert_eq!(a & 0xFFFF_FFFF, obfuscate32(2, &keys, &spec) as u64);
        assert_eq!(deobfuscate64(a, &keys, &spec), 0x0000_0001_0000_0002);
    }
}
