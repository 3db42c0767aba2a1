//! Per-module side-channel vulnerability factor.
//!
//! For a module `M`, the per-cycle side-channel word is the concatenation of
//! its own signals. At every cycle `c` the pairwise Hamming distances between
//! runs (`D_S,c`) are correlated with the pairwise distances between oracle
//! values (`D_O`); the module score is `max_c |rho(D_O, D_S,c)|`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{module_word_series, ModuleNode, RunSet, WordSeries};

use super::hamming::pairwise_word_distances;
use super::{pearson, MetricsError, OracleTrace};

/// Cycle range `[start, end)`, 0-based. `end = None` runs to the last cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleWindow {
    pub start: usize,
    pub end: Option<usize>,
}

impl CycleWindow {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end: Some(end) }
    }

    fn resolve(&self, cycles: usize) -> Result<(usize, usize), MetricsError> {
        let end = self.end.unwrap_or(cycles).min(cycles);
        if self.start >= end {
            return Err(MetricsError::EmptyWindow { start: self.start, end, cycles });
        }
        Ok((self.start, end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvfResult {
    pub module_path: Vec<String>,
    pub oracle_label: String,
    pub svf: f64,
    /// 1-based cycle of the maximum, counted from the start of the run.
    pub peak_cycle: usize,
    /// 1-based cycle of `per_cycle_scores[0]`.
    pub first_cycle: usize,
    pub per_cycle_scores: Vec<f64>,
    /// Fraction of sampled bits that were x or z.
    pub xz_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvfOptions {
    pub window: CycleWindow,
    /// Oracle permutations for the noise floor; 0 disables it.
    pub shuffles: usize,
    pub seed: u64,
}

impl Default for SvfOptions {
    fn default() -> Self {
        Self { window: CycleWindow::full(), shuffles: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvfEntry {
    pub module_path: Vec<String>,
    pub oracle: String,
    pub svf: f64,
    pub peak_cycle: usize,
    pub noise_floor: Option<f64>,
    pub xz_ratio: f64,
}

impl SvfEntry {
    pub fn path_string(&self) -> String {
        self.module_path.join("/")
    }
}

/// Modules ranked by descending SVF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SvfReport {
    pub entries: Vec<SvfEntry>,
}

impl SvfReport {
    pub fn get(&self, path: &str) -> Option<&SvfEntry> {
        self.entries.iter().find(|e| e.path_string() == path)
    }

    /// 0-based rank of a module.
    pub fn rank_of(&self, path: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.path_string() == path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Pairwise distance patterns of one module over a window, with identical
/// consecutive cycles shared.
struct ModulePatterns {
    first: usize,
    /// Index into `unique` per window cycle.
    cycle_to_unique: Vec<usize>,
    unique: Vec<Vec<f64>>,
    xz_ratio: f64,
}

impl ModulePatterns {
    fn build(runs: &RunSet, node: &ModuleNode, window: CycleWindow) -> Result<Self, MetricsError> {
        let (first, end) = window.resolve(runs.cycles())?;
        let series: Vec<WordSeries> = runs
            .runs
            .iter()
            .map(|m| module_word_series(m, node))
            .collect::<Result<_, _>>()?;
        let mut cycle_to_unique = Vec::with_capacity(end - first);
        let mut unique: Vec<Vec<f64>> = Vec::new();
        let mut unknown = 0u64;
        for c in first..end {
            unknown += series.iter().map(|s| s.unknown_bits[c] as u64).sum::<u64>();
            let unchanged = c > first && series.iter().all(|s| s.at(c) == s.at(c - 1));
            if unchanged {
                cycle_to_unique.push(unique.len() - 1);
                continue;
            }
            let words: Vec<&[u64]> = series.iter().map(|s| s.at(c)).collect();
            let d = pairwise_word_distances(&words).into_iter().map(|v| v as f64).collect();
            cycle_to_unique.push(unique.len());
            unique.push(d);
        }
        let total_bits = series[0].width as f64 * (end - first) as f64 * series.len() as f64;
        Ok(Self { first, cycle_to_unique, unique, xz_ratio: unknown as f64 / total_bits })
    }

    fn scores(&self, oracle_d: &[f64]) -> Vec<f64> {
        let unique_scores: Vec<f64> = self
            .unique
            .iter()
            .map(|d| match pearson(oracle_d, d) {
                Ok(r) => r.abs(),
                Err(_) => 0.0,
            })
            .collect();
        self.cycle_to_unique.iter().map(|u| unique_scores[*u]).collect()
    }

    fn result(&self, node: &ModuleNode, oracle: &OracleTrace, oracle_d: &[f64]) -> SvfResult {
        let per_cycle_scores = self.scores(oracle_d);
        let (peak, svf) = argmax(&per_cycle_scores);
        SvfResult {
            module_path: node.path.clone(),
            oracle_label: oracle.label.clone(),
            svf,
            peak_cycle: self.first + peak + 1,
            first_cycle: self.first + 1,
            per_cycle_scores,
            xz_ratio: self.xz_ratio,
        }
    }

    /// 99th percentile (nearest rank) of the SVF under random oracle
    /// permutations.
    fn noise_floor(&self, oracle: &OracleTrace, shuffles: usize, seed: u64) -> f64 {
        let standardized: Vec<Vec<f64>> = self.unique.iter().filter_map(|d| standardize(d)).collect();
        let mut maxima: Vec<f64> = (0..shuffles)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut order: Vec<usize> = (0..oracle.values.len()).collect();
                order.shuffle(&mut rng);
                let words: Vec<&[u64]> = order.iter().map(|i| oracle.values[*i].words()).collect();
                let d: Vec<f64> = pairwise_word_distances(&words).into_iter().map(|v| v as f64).collect();
                let Some(z) = standardize(&d) else { return 0.0 };
                standardized
                    .iter()
                    .map(|zs| zs.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        percentile_nearest_rank(&mut maxima, 0.99)
    }
}

fn standardize(d: &[f64]) -> Option<Vec<f64>> {
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let centered: Vec<f64> = d.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then(|| centered.into_iter().map(|v| v / norm).collect())
}

/// First index of the maximum.
fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
}

pub fn percentile_nearest_rank(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let rank = (q * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

fn check_oracle(runs: &RunSet, oracle: &OracleTrace) -> Result<Vec<f64>, MetricsError> {
    if oracle.values.len() != runs.n() {
        return Err(MetricsError::OracleLength { oracle: oracle.values.len(), runs: runs.n() });
    }
    let words: Vec<&[u64]> = oracle.values.iter().map(|v| v.words()).collect();
    Ok(pairwise_word_distances(&words).into_iter().map(|v| v as f64).collect())
}

pub fn svf_module(runs: &RunSet, node: &ModuleNode, oracle: &OracleTrace) -> Result<SvfResult, MetricsError> {
    svf_module_windowed(runs, node, oracle, CycleWindow::full())
}

pub fn svf_module_windowed(
    runs: &RunSet,
    node: &ModuleNode,
    oracle: &OracleTrace,
    window: CycleWindow,
) -> Result<SvfResult, MetricsError> {
    let oracle_d = check_oracle(runs, oracle)?;
    let patterns = ModulePatterns::build(runs, node, window)?;
    Ok(patterns.result(node, oracle, &oracle_d))
}

/// Permutation noise floor for one module and oracle.
pub fn svf_noise_floor(
    runs: &RunSet,
    node: &ModuleNode,
    oracle: &OracleTrace,
    window: CycleWindow,
    shuffles: usize,
    seed: u64,
) -> Result<f64, MetricsError> {
    check_oracle(runs, oracle)?;
    Ok(ModulePatterns::build(runs, node, window)?.noise_floor(oracle, shuffles, seed))
}

/// Scores every module that owns signals against every oracle, keeping the
/// best oracle per module, and ranks modules by descending SVF.
pub fn svf_all(runs: &RunSet, oracles: &[OracleTrace], opts: &SvfOptions) -> Result<SvfReport, MetricsError> {
    if oracles.is_empty() {
        return Err(MetricsError::NoOracle);
    }
    let oracle_ds = oracles.iter().map(|o| check_oracle(runs, o)).collect::<Result<Vec<_>, _>>()?;
    let modules: Vec<&ModuleNode> = runs.hierarchy.iter().filter(|m| !m.signals.is_empty()).collect();
    let mut entries = modules
        .par_iter()
        .map(|node| {
            let patterns = ModulePatterns::build(runs, node, opts.window)?;
            let mut best: Option<(usize, SvfResult)> = None;
            for (i, (oracle, d)) in oracles.iter().zip(&oracle_ds).enumerate() {
                let r = patterns.result(node, oracle, d);
                if best.as_ref().is_none_or(|(_, b)| r.svf > b.svf) {
                    best = Some((i, r));
                }
            }
            let (i, r) = best.expect("at least one oracle");
            let noise_floor = (opts.shuffles > 0).then(|| {
                let seed = opts.seed ^ fnv1a(&node.path.join("/"));
                patterns.noise_floor(&oracles[i], opts.shuffles, seed)
            });
            Ok(SvfEntry {
                module_path: r.module_path,
                oracle: r.oracle_label,
                svf: r.svf,
                peak_cycle: r.peak_cycle,
                noise_floor,
                xz_ratio: r.xz_ratio,
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    entries.sort_by(|a, b| b.svf.total_cmp(&a.svf).then_with(|| a.module_path.cmp(&b.module_path)));
    Ok(SvfReport { entries })
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
