//! Hamming-distance power synthesis.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::machine::CycleSink;
use super::CycleLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub samples: Vec<f64>,
}

/// Accumulates per-cycle toggle counts plus Gaussian noise, keeping only the
/// samples inside `[start, end)`.
#[derive(Debug, Clone)]
pub struct PowerSink {
    prev: Vec<u64>,
    cycle: usize,
    start: usize,
    end: usize,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
    mask: Option<Vec<u64>>,
    pub samples: Vec<f64>,
}

impl PowerSink {
    pub fn new(words_per_cycle: usize, sigma: f64, seed: u64) -> Self {
        Self::windowed(words_per_cycle, sigma, seed, 0, usize::MAX)
    }

    pub fn windowed(words_per_cycle: usize, sigma: f64, seed: u64, start: usize, end: usize) -> Self {
        let noise = (sigma > 0.0)
            .then(|| (Normal::new(0.0, sigma).expect("finite sigma"), ChaCha8Rng::seed_from_u64(seed)));
        Self { prev: vec![0; words_per_cycle], cycle: 0, start, end, noise, mask: None, samples: Vec::new() }
    }

    /// Counts only toggles under `mask` (one entry per row word), e.g. a
    /// single module's power from [`LogLayout::word_mask`](super::LogLayout::word_mask).
    pub fn with_mask(mut self, mask: Vec<u64>) -> Self {
        assert_eq!(mask.len(), self.prev.len(), "mask length");
        self.mask = Some(mask);
        self
    }

    pub fn into_trace(self) -> PowerTrace {
        PowerTrace { samples: self.samples }
    }
}

impl CycleSink for PowerSink {
    fn cycle(&mut self, row: &[u64], _valid: &[u64]) {
        let toggles: u32 = match &self.mask {
            None => row.iter().zip(&self.prev).map(|(a, b)| (a ^ b).count_ones()).sum(),
            Some(m) => row.iter().zip(&self.prev).zip(m).map(|((a, b), m)| ((a ^ b) & m).count_ones()).sum(),
        };
        self.prev.copy_from_slice(row);
        let noise = match &mut self.noise {
            Some((dist, rng)) => dist.sample(rng),
            None => 0.0,
        };
        if (self.start..self.end).contains(&self.cycle) {
            self.samples.push(toggles as f64 + noise);
        }
        self.cycle += 1;
    }
}

/// `sample[c] = sum over elements of HD(value[c-1], value[c]) + N(0, sigma^2)`,
/// with the all-zero reset state before cycle 0.
pub fn synth_power(log: &CycleLog, sigma: f64, seed: u64) -> PowerTrace {
    let mut sink = PowerSink::new(log.layout.words_per_cycle(), sigma, seed);
    for c in 0..log.cycles() {
        sink.cycle(log.row(c), log.valid_bits(c));
    }
    sink.into_trace()
}

/// Both a log and a power trace from one pass.
pub(crate) struct Tee<'a, A, B>(pub &'a mut A, pub &'a mut B);

impl<A: CycleSink, B: CycleSink> CycleSink for Tee<'_, A, B> {
    fn cycle(&mut self, row: &[u64], valid: &[u64]) {
        self.0.cycle(row, valid);
        self.1.cycle(row, valid);
    }
}
