//! Affine round function `Y = A (R || K) + C` over GF(2).

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ObfuscationError;

/// Seed used to derive the shipped default matrix and constant.
pub const DEFAULT_AFFINE_SEED: u64 = 0x5EED_AF1E_0000_0001;

/// Version tag of the shipped default. Bump it whenever the default changes,
/// since golden vectors depend on it.
pub const DEFAULT_AFFINE_VERSION: u32 = 1;

const DEFAULT_JSON: &str = include_str!("../../data/affine_default_v1.json");

/// A 16 x 32 binary matrix plus a 16-bit constant.
///
/// Row `i` produces output bit `15 - i` (row 0 is the most significant output
/// bit). Each row is a 32-bit mask over the input `R || K`, where `R` occupies
/// the upper 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineSpec {
    rows: [u32; 16],
    constant: u16,
}

impl AffineSpec {
    pub fn new(rows: [u32; 16], constant: u16) -> Self {
        Self { rows, constant }
    }

    /// All-zero matrix and constant.
    pub fn zero() -> Self {
        Self::new([0; 16], 0)
    }

    /// `A = [I16 | 0]`, `C = 0`: the output equals the `R` input.
    pub fn projection() -> Self {
        let mut rows = [0u32; 16];
        for (i, row) in rows.iter_mut().enumerate() {
            *row = 1 << (31 - i);
        }
        Self::new(rows, 0)
    }

    /// Pseudo-random matrix from `seed`, never emitting an all-zero row.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = [0u32; 16];
        for row in rows.iter_mut() {
            *row = loop {
                let candidate = rng.next_u32();
                if candidate != 0 {
                    break candidate;
                }
            };
        }
        let constant = loop {
            let c = (rng.next_u32() & 0xFFFF) as u16;
            if c != 0 {
                break c;
            }
        };
        Self::new(rows, constant)
    }

    /// The versioned default shipped with the crate.
    pub fn default_v1() -> Self {
        // The embedded file is validated by tests; a parse failure here is a
        // build defect, not a runtime condition.
        Self::from_json(DEFAULT_JSON).expect("embedded affine default is valid")
    }

    pub fn rows(&self) -> &[u32; 16] {
        &self.rows
    }

    pub fn constant(&self) -> u16 {
        self.constant
    }

    #[inline]
    pub fn apply(&self, r: u16, k: u16) -> u16 {
        let input = ((r as u32) << 16) | k as u32;
        let mut out = 0u16;
        for (i, row) in self.rows.iter().enumerate() {
            let bit = ((row & input).count_ones() & 1) as u16;
            out |= bit << (15 - i);
        }
        out ^ self.constant
    }

    pub fn to_json(&self) -> String {
        let file = AffineSpecFile {
            version: DEFAULT_AFFINE_VERSION,
            seed: None,
            rows: self.rows.iter().map(|r| format!("0x{r:08x}")).collect(),
            constant: format!("0x{:04x}", self.constant),
        };
        serde_json::to_string_pretty(&file).expect("plain struct serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ObfuscationError> {
        let file: AffineSpecFile = serde_json::from_str(text)
            .map_err(|e| ObfuscationError::AffineSpec(e.to_string()))?;
        if file.rows.len() != 16 {
            return Err(ObfuscationError::AffineSpec(format!(
                "expected 16 rows, found {}",
                file.rows.len()
            )));
        }
        let mut rows = [0u32; 16];
        for (i, text) in file.rows.iter().enumerate() {
            rows[i] = parse_hex_u32(text)
                .ok_or_else(|| ObfuscationError::AffineSpec(format!("row {i}: bad hex {text:?}")))?;
        }
        let constant = parse_hex_u32(&file.constant)
            .filter(|c| *c <= 0xFFFF)
            .ok_or_else(|| {
                ObfuscationError::AffineSpec(format!("bad 16-bit constant {:?}", file.constant))
            })? as u16;
        Ok(Self::new(rows, constant))
    }
}

impl Default for AffineSpec {
    fn default() -> Self {
        Self::default_v1()
    }
}

/// On-disk form: hex-encoded rows and constant.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineSpecFile {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<String>,
    rows: Vec<String>,
    constant: String,
}

fn parse_hex_u32(text: &str) -> Option<u32> {
    let digits = text.trim().trim_start_matches("0x").trim_start_matches("0X");
    if digits.is_empty() || digits.len() > 8 {
        return None;
    }
    u32::from_str_radix(digits, 16).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_is_zero() {
        let spec = AffineSpec::zero();
        for (r, k) in [(0, 0), (0xFFFF, 0x1234), (0xA5A5, 0xFFFF)] {
            assert_eq!(spec.apply(r, k), 0);
        }
    }

    #[test]
    fn projection_returns_r() {
        let spec = AffineSpec::projection();
        for (r, k) in [(0, 0xFFFF), (0xBEEF, 0x1234), (0x8001, 0)] {
            assert_eq!(spec.apply(r, k), r);
        }
    }

    #[test]
    fn shipped_default_matches_generator() {
        assert_eq!(AffineSpec::default_v1(), AffineSpec::generate(DEFAULT_AFFINE_SEED));
        assert!(AffineSpec::default_v1().rows().iter().all(|r| *r != 0));
    }

    #[test]
    fn json_roundtrip() {
        let spec = AffineSpec::generate(7);
        assert_eq!(AffineSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn rejects_wrong_row_count() {
        let text = r#"{"version":1,"rows":["0x1"],"constant":"0x0"}"#;
        assert!(AffineSpec::from_json(text).is_err());
    }
}
