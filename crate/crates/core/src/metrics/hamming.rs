use crate::bits::BitVec;

use super::MetricsError;

/// Power model of a signal: its number of set bits (x/z count as 0).
pub fn hamming_weight(x: &BitVec) -> u32 {
    x.count_ones()
}

pub fn hamming_distance(x: &BitVec, y: &BitVec) -> Result<u32, MetricsError> {
    if x.width() != y.width() {
        return Err(MetricsError::WidthMismatch { left: x.width(), right: y.width() });
    }
    Ok(hd_words(x.words(), y.words()))
}

#[inline]
pub fn hd_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Distances over all unordered pairs `(i, j)`, `i > j`, ordered by `j`
/// then `i`: `(1,0), (2,0), ..., (N-1,0), (2,1), ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceVector {
    pub entries: Vec<u32>,
}

impl DistanceVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.entries.iter().map(|&d| d as f64).collect()
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

pub fn pairwise_distances(items: &[BitVec]) -> Result<DistanceVector, MetricsError> {
    if items.len() < 2 {
        return Err(MetricsError::TooFewItems { needed: 2, got: items.len() });
    }
    let width = items[0].width();
    if let Some(bad) = items.iter().find(|v| v.width() != width) {
        return Err(MetricsError::WidthMismatch { left: width, right: bad.width() });
    }
    let words: Vec<&[u64]> = items.iter().map(|v| v.words()).collect();
    Ok(DistanceVector { entries: pairwise_word_distances(&words) })
}

/// Canonical-order distances over raw word slices of equal length.
pub fn pairwise_word_distances(items: &[&[u64]]) -> Vec<u32> {
    let n = items.len();
    let mut out = Vec::with_capacity(pair_count(n));
    for j in 0..n {
        for i in j + 1..n {
            out.push(hd_words(items[i], items[j]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: u64, w: u32) -> BitVec {
        BitVec::from_u64(v, w)
    }

    #[test]
    fn weights() {
        assert_eq!(hamming_weight(&b(0, 4)), 0);
        assert_eq!(hamming_weight(&b(0b1011, 4)), 3);
        assert_eq!(hamming_weight(&b(0xFFFF, 16)), 16);
    }

    #[test]
    fn distances() {
        assert_eq!(hamming_distance(&b(0x5A, 8), &b(0x5A, 8)).unwrap(), 0);
        assert_eq!(hamming_distance(&b(0b1010, 4), &b(0b0110, 4)).unwrap(), 2);
        assert_eq!(hamming_distance(&b(0x00, 8), &b(0xFF, 8)).unwrap(), 8);
        assert!(matches!(
            hamming_distance(&b(0, 8), &b(0, 9)),
            Err(MetricsError::WidthMismatch { left: 8, right: 9 })
        ));
    }

    #[test]
    fn pairwise_three_items() {
        let d = pairwise_distances(&[b(0b00, 2), b(0b11, 2), b(0b01, 2)]).unwrap();
        assert_eq!(d.entries, vec![2, 1, 1]);
    }

    #[test]
    fn pairwise_identical_and_too_few() {
        let same = vec![b(0xAB, 8); 5];
        assert_eq!(pairwise_distances(&same).unwrap().entries, vec![0; 10]);
        assert!(matches!(pairwise_distances(&same[..1]), Err(MetricsError::TooFewItems { .. })));
    }
}
