//! Fixed-width four-state bit vectors.

use std::fmt;

/// Bit vector of arbitrary width with separate x and z marks.
///
/// Bit 0 is the least significant bit. Positions marked x or z hold 0 in the
/// value words, so Hamming computations treat unknowns as 0.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    width: u32,
    bits: Vec<u64>,
    x: Vec<u64>,
    z: Vec<u64>,
}

#[inline]
pub(crate) fn words_for(width: u32) -> usize {
    (width as usize).div_ceil(64).max(1)
}

impl BitVec {
    pub fn zero(width: u32) -> Self {
        Self { width, bits: vec![0; words_for(width)], x: Vec::new(), z: Vec::new() }
    }

    /// Keeps the low `width` bits of `value`.
    pub fn from_u64(value: u64, width: u32) -> Self {
        let mut v = Self::zero(width);
        v.bits[0] = value;
        v.mask_top();
        v
    }

    pub fn from_words(words: &[u64], width: u32) -> Self {
        let mut v = Self::zero(width);
        let n = v.bits.len().min(words.len());
        v.bits[..n].copy_from_slice(&words[..n]);
        v.mask_top();
        v
    }

    /// Builds from value words plus optional x and z masks (same layout).
    pub fn from_parts(width: u32, bits: &[u64], x: Option<&[u64]>, z: Option<&[u64]>) -> Self {
        let mut v = Self::from_words(bits, width);
        let n = v.bits.len();
        if let Some(x) = x.filter(|m| m.iter().any(|w| *w != 0)) {
            v.x = x[..n].to_vec();
        }
        if let Some(z) = z.filter(|m| m.iter().any(|w| *w != 0)) {
            v.z = z[..n].to_vec();
        }
        v.normalize();
        v
    }

    fn mask_top(&mut self) {
        let rem = self.width % 64;
        let n = words_for(self.width);
        let top_mask = if rem == 0 { u64::MAX } else { (1u64 << rem) - 1 };
        if self.width == 0 {
            self.bits[0] = 0;
            return;
        }
        self.bits[n - 1] &= top_mask;
        for m in [&mut self.x, &mut self.z] {
            if !m.is_empty() {
                m[n - 1] &= top_mask;
            }
        }
    }

    fn normalize(&mut self) {
        self.mask_top();
        for (i, w) in self.bits.iter_mut().enumerate() {
            let unknown = self.x.get(i).copied().unwrap_or(0) | self.z.get(i).copied().unwrap_or(0);
            *w &= !unknown;
        }
        if self.x.iter().all(|w| *w == 0) {
            self.x.clear();
        }
        if self.z.iter().all(|w| *w == 0) {
            self.z.clear();
        }
    }

    /// Parses VCD-style binary digits, most significant first.
    ///
    /// A string shorter than `width` is left-extended: with `x` or `z` when
    /// that is the leading digit, with 0 otherwise.
    pub fn parse_binary(digits: &str, width: u32) -> Option<Self> {
        let digits = digits.as_bytes();
        if digits.is_empty() || digits.len() > width as usize {
            return None;
        }
        let pad = match digits[0].to_ascii_lowercase() {
            b'x' => b'x',
            b'z' => b'z',
            _ => b'0',
        };
        let n = words_for(width);
        let mut bits = vec![0u64; n];
        let mut x = vec![0u64; n];
        let mut z = vec![0u64; n];
        let missing = width as usize - digits.len();
        for pos in 0..width as usize {
            // pos counts from the most significant bit
            let c = if pos < missing { pad } else { digits[pos - missing].to_ascii_lowercase() };
            let bit = width as usize - 1 - pos;
            let (w, b) = (bit / 64, bit % 64);
            match c {
                b'0' => {}
                b'1' => bits[w] |= 1 << b,
                b'x' => x[w] |= 1 << b,
                b'z' => z[w] |= 1 << b,
                _ => return None,
            }
        }
        Some(Self::from_parts(width, &bits, Some(&x), Some(&z)))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Value words with unknown bits reading as 0.
    pub fn words(&self) -> &[u64] {
        &self.bits
    }

    pub fn x_mask(&self) -> Option<&[u64]> {
        (!self.x.is_empty()).then_some(&self.x[..])
    }

    pub fn z_mask(&self) -> Option<&[u64]> {
        (!self.z.is_empty()).then_some(&self.z[..])
    }

    pub fn low_u64(&self) -> u64 {
        self.bits[0]
    }

    pub fn has_unknown(&self) -> bool {
        !self.x.is_empty() || !self.z.is_empty()
    }

    pub fn unknown_count(&self) -> u32 {
        self.x.iter().chain(self.z.iter()).map(|w| w.count_ones()).sum()
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.iter().map(|w| w.count_ones()).sum()
    }

    /// Concatenation `parts[0] || parts[1] || ...`, first part most significant.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a BitVec>) -> BitVec {
        let parts: Vec<&BitVec> = parts.into_iter().collect();
        let width: u32 = parts.iter().map(|p| p.width).sum();
        let n = words_for(width);
        let mut bits = vec![0u64; n];
        let mut x = vec![0u64; n];
        let mut z = vec![0u64; n];
        let mut offset = 0u32;
        for part in parts.iter().rev() {
            append_bits(&mut bits, offset, &part.bits, part.width);
            if !part.x.is_empty() {
                append_bits(&mut x, offset, &part.x, part.width);
            }
            if !part.z.is_empty() {
                append_bits(&mut z, offset, &part.z, part.width);
            }
            offset += part.width;
        }
        BitVec::from_parts(width, &bits, Some(&x), Some(&z))
    }

    fn digit(&self, bit: u32) -> char {
        let (w, b) = ((bit / 64) as usize, bit % 64);
        let test = |m: &Vec<u64>| m.get(w).is_some_and(|v| v >> b & 1 == 1);
        if test(&self.x) {
            'x'
        } else if test(&self.z) {
            'z'
        } else if self.bits[w] >> b & 1 == 1 {
            '1'
        } else {
            '0'
        }
    }

    /// Binary digits, most significant first, full width.
    pub fn to_binary(&self) -> String {
        (0..self.width).rev().map(|b| self.digit(b)).collect()
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'b{}", self.width, self.to_binary())
    }
}

/// ORs the low `width` bits of `src` into `dst` starting at bit `offset`.
pub(crate) fn append_bits(dst: &mut [u64], offset: u32, src: &[u64], width: u32) {
    let mut remaining = width;
    let mut src_bit = 0u32;
    while remaining > 0 {
        let take = remaining.min(64 - (src_bit % 64)).min(64);
        let sw = src[(src_bit / 64) as usize] >> (src_bit % 64);
        let chunk = if take == 64 { sw } else { sw & ((1u64 << take) - 1) };
        let dst_bit = offset + src_bit;
        let (dw, db) = ((dst_bit / 64) as usize, dst_bit % 64);
        dst[dw] |= chunk << db;
        if db + take > 64 {
            dst[dw + 1] |= chunk >> (64 - db);
        }
        src_bit += take;
        remaining -= take;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_two_nibbles() {
        let a = BitVec::from_u64(0b1010, 4);
        let b = BitVec::from_u64(0b0110, 4);
        let c = BitVec::concat([&a, &b]);
        assert_eq!(c, BitVec::from_u64(0b1010_0110, 8));
    }

    #[test]
    fn concat_wide() {
        let parts: Vec<BitVec> = (0..3).map(|i| BitVec::from_u64(0xFFFF_0000 + i, 32)).collect();
        let c = BitVec::concat(&parts);
        assert_eq!(c.width(), 96);
        assert_eq!(c.words()[0], 0xFFFF_0001_FFFF_0002);
        assert_eq!(c.words()[1], 0xFFFF_0000);
    }

    #[test]
    fn parse_pads_per_leading_digit() {
        assert_eq!(BitVec::parse_binary("101", 6).unwrap().to_binary(), "000101");
        assert_eq!(BitVec::parse_binary("x01", 5).unwrap().to_binary(), "xxx01");
        assert_eq!(BitVec::parse_binary("z", 3).unwrap().to_binary(), "zzz");
        assert!(BitVec::parse_binary("1012", 4).is_none());
        assert!(BitVec::parse_binary("10101", 4).is_none());
    }

    #[test]
    fn unknowns_read_as_zero() {
        let v = BitVec::parse_binary("1x1z", 4).unwrap();
        assert_eq!(v.count_ones(), 2);
        assert_eq!(v.unknown_count(), 2);
    }
}
