//! First-order correlation power analysis on the first AES round.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::{first_round_value, Block, PointKind};
use crate::metrics::pearson;

#[derive(Debug, Error)]
pub enum DpaError {
    #[error("need at least 2 traces, got {0}")]
    TooFewTraces(usize),
    #[error("{traces} traces but {plaintexts} plaintexts")]
    CountMismatch { traces: usize, plaintexts: usize },
    #[error("trace {index} has {found} samples, expected {expected}")]
    RaggedTrace { index: usize, expected: usize, found: usize },
    #[error("target byte {0} out of range 0..16")]
    ByteOutOfRange(usize),
    #[error("checkpoint step must be >= 1")]
    ZeroStep,
}

/// Hamming weight of the first-round value for plaintext byte `p` under
/// key guess `g`.
pub fn hypothesis(p: u8, g: u8, point: PointKind) -> f64 {
    first_round_value(p, g, point).count_ones() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub target_byte: usize,
    pub point: PointKind,
    pub traces: usize,
    pub samples: usize,
    pub best_guess: u8,
    pub best_sample: usize,
    /// Guesses ordered by descending max |rho|, ties by lower guess.
    pub ranks: Vec<u8>,
    /// max over samples of |rho| per guess.
    pub max_abs_rho: Vec<f64>,
    /// `correlations[g][c]`; may be dropped before serializing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlations: Vec<Vec<f64>>,
}

impl AttackResult {
    /// 1-based position of `guess` in the ranking.
    pub fn rank_of(&self, guess: u8) -> usize {
        self.ranks.iter().position(|g| *g == guess).expect("all guesses ranked") + 1
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

fn rank_guesses(max_abs: &[f64]) -> Vec<u8> {
    let mut order: Vec<u8> = (0..=255).collect();
    order.sort_by(|a, b| max_abs[*b as usize].total_cmp(&max_abs[*a as usize]).then(a.cmp(b)));
    order
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn check_shape<T: AsRef<[f64]>>(traces: &[T], plaintexts: &[Block], target_byte: usize) -> Result<usize, DpaError> {
    if target_byte >= 16 {
        return Err(DpaError::ByteOutOfRange(target_byte));
    }
    if traces.len() != plaintexts.len() {
        return Err(DpaError::CountMismatch { traces: traces.len(), plaintexts: plaintexts.len() });
    }
    if traces.len() < 2 {
        return Err(DpaError::TooFewTraces(traces.len()));
    }
    let d = traces[0].as_ref().len();
    for (i, t) in traces.iter().enumerate() {
        if t.as_ref().len() != d {
            return Err(DpaError::RaggedTrace { index: i, expected: d, found: t.as_ref().len() });
        }
    }
    Ok(d)
}

/// Correlates every key guess's Hamming-weight hypothesis with every sample
/// column. Degenerate columns or hypotheses score 0.
pub fn cpa_attack<T: AsRef<[f64]> + Sync>(
    traces: &[T],
    plaintexts: &[Block],
    target_byte: usize,
    point: PointKind,
) -> Result<AttackResult, DpaError> {
    let d = check_shape(traces, plaintexts, target_byte)?;
    let columns: Vec<Vec<f64>> = (0..d).map(|c| traces.iter().map(|t| t.as_ref()[c]).collect()).collect();
    let correlations: Vec<Vec<f64>> = (0..=255u8)
        .into_par_iter()
        .map(|g| {
            let h: Vec<f64> = plaintexts.iter().map(|p| hypothesis(p[target_byte], g, point)).collect();
            columns.iter().map(|col| pearson(&h, col).unwrap_or(0.0)).collect()
        })
        .collect();
    Ok(summarize(target_byte, point, traces.len(), d, correlations))
}

fn summarize(target_byte: usize, point: PointKind, n: usize, d: usize, correlations: Vec<Vec<f64>>) -> AttackResult {
    let max_abs_rho: Vec<f64> =
        correlations.iter().map(|row| row.iter().fold(0.0f64, |m, r| m.max(r.abs()))).collect();
    let ranks = rank_guesses(&max_abs_rho);
    let best_guess = ranks[0];
    let abs_row: Vec<f64> = correlations[best_guess as usize].iter().map(|r| r.abs()).collect();
    AttackResult {
        target_byte,
        point,
        traces: n,
        samples: d,
        best_guess,
        best_sample: if d == 0 { 0 } else { argmax(&abs_row) },
        ranks,
        max_abs_rho,
        correlations,
    }
}

/// Streaming CPA state. Traces are summed per value of the targeted
/// plaintext byte, so a checkpoint costs `256 x 256 x d` regardless of how
/// many traces were absorbed.
#[derive(Debug, Clone)]
pub struct CpaAccumulator {
    target_byte: usize,
    samples: usize,
    n: u64,
    count: [u64; 256],
    /// First trace, subtracted from all samples to keep sums small.
    origin: Vec<f64>,
    by_byte: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CpaAccumulator {
    pub fn new(target_byte: usize, samples: usize) -> Result<Self, DpaError> {
        if target_byte >= 16 {
            return Err(DpaError::ByteOutOfRange(target_byte));
        }
        Ok(Self {
            target_byte,
            samples,
            n: 0,
            count: [0; 256],
            origin: Vec::new(),
            by_byte: vec![0.0; 256 * samples],
            sum: vec![0.0; samples],
            sum_sq: vec![0.0; samples],
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn push(&mut self, trace: &[f64], plaintext: &Block) -> Result<(), DpaError> {
        if trace.len() != self.samples {
            return Err(DpaError::RaggedTrace { index: self.n as usize, expected: self.samples, found: trace.len() });
        }
        if self.origin.is_empty() {
            self.origin = trace.to_vec();
        }
        let b = plaintext[self.target_byte] as usize;
        self.count[b] += 1;
        self.n += 1;
        let row = &mut self.by_byte[b * self.samples..(b + 1) * self.samples];
        for c in 0..self.samples {
            let t = trace[c] - self.origin[c];
            row[c] += t;
            self.sum[c] += t;
            self.sum_sq[c] += t * t;
        }
        Ok(())
    }

    /// `rho[g][c]` for all guesses over the traces absorbed so far.
    pub fn correlations(&self, point: PointKind) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        let t_var: Vec<f64> = (0..self.samples).map(|c| n * self.sum_sq[c] - self.sum[c] * self.sum[c]).collect();
        (0..=255u8)
            .into_par_iter()
            .map(|g| {
                let h: Vec<f64> = (0..=255u8).map(|b| hypothesis(b, g, point)).collect();
                let (mut sh, mut sh2) = (0.0, 0.0);
                for b in 0..256 {
                    let k = self.count[b] as f64;
                    sh += k * h[b];
                    sh2 += k * h[b] * h[b];
                }
                let h_var = n * sh2 - sh * sh;
                let mut sht = vec![0.0; self.samples];
                for b in 0..256 {
                    if self.count[b] == 0 || h[b] == 0.0 {
                        continue;
                    }
                    let row = &self.by_byte[b * self.samples..(b + 1) * self.samples];
                    for (acc, t) in sht.iter_mut().zip(row) {
                        *acc += h[b] * t;
                    }
                }
                (0..self.samples)
                    .map(|c| {
                        let den = h_var * t_var[c];
                        if h_var <= 1e-9 * n * n || t_var[c] <= 1e-12 * n * n || den <= 0.0 {
                            0.0
                        } else {
                            ((n * sht[c] - sh * self.sum[c]) / den.sqrt()).clamp(-1.0, 1.0)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn result(&self, point: PointKind) -> AttackResult {
        summarize(self.target_byte, point, self.n as usize, self.samples, self.correlations(point))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub trace_count: usize,
    /// 1-based rank of the true key byte.
    pub rank: usize,
    /// max |rho| per guess at this checkpoint.
    pub max_abs_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdCurve {
    pub true_key: u8,
    pub checkpoints: Vec<Checkpoint>,
    /// Smallest checkpoint from which the true key stays at rank 1, if any.
    pub mtd: Option<usize>,
}

impl MtdCurve {
    pub fn disclosed(&self) -> bool {
        self.mtd.is_some()
    }

    /// Rows `trace_count,guess,max_abs_rho`.
    pub fn evolution_csv(&self) -> String {
        let mut out = String::from("trace_count,guess,max_abs_rho\n");
        for cp in &self.checkpoints {
            for (g, r) in cp.max_abs_rho.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", cp.trace_count, g, r));
            }
        }
        out
    }

    /// Series of one guess: (trace_count, max |rho|).
    pub fn series(&self, guess: u8) -> Vec<(usize, f64)> {
        self.checkpoints.iter().map(|c| (c.trace_count, c.max_abs_rho[guess as usize])).collect()
    }
}

/// Checkpoint counts `step, 2*step, ...`, plus `total` if not a multiple.
pub fn checkpoint_counts(total: usize, step: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=total / step).map(|k| k * step).collect();
    if total % step != 0 {
        out.push(total);
    }
    out.retain(|c| *c >= 2);
    out
}

/// Rank of the true key at growing prefixes of a trace stream; `mtd` is the
/// first checkpoint after which the rank is 1 at every later checkpoint.
pub struct MtdTracker {
    acc: CpaAccumulator,
    point: PointKind,
    true_key: u8,
    step: usize,
    checkpoints: Vec<Checkpoint>,
}

impl MtdTracker {
    pub fn new(target_byte: usize, samples: usize, true_key: u8, step: usize, point: PointKind) -> Result<Self, DpaError> {
        if step == 0 {
            return Err(DpaError::ZeroStep);
        }
        Ok(Self { acc: CpaAccumulator::new(target_byte, samples)?, point, true_key, step, checkpoints: Vec::new() })
    }

    pub fn push(&mut self, trace: &[f64], plaintext: &Block) -> Result<(), DpaError> {
        self.acc.push(trace, plaintext)?;
        if self.acc.len() as usize % self.step == 0 && self.acc.len() >= 2 {
            self.checkpoint();
        }
        Ok(())
    }

    fn checkpoint(&mut self) {
        let max_abs_rho: Vec<f64> = self
            .acc
            .correlations(self.point)
            .iter()
            .map(|row| row.iter().fold(0.0f64, |m, r| m.max(r.abs())))
            .collect();
        let ranks = rank_guesses(&max_abs_rho);
        let rank = ranks.iter().position(|g| *g == self.true_key).expect("ranked") + 1;
        self.checkpoints.push(Checkpoint { trace_count: self.acc.len() as usize, rank, max_abs_rho });
    }

    /// Attack over every trace pushed so far.
    pub fn result(&self) -> AttackResult {
        self.acc.result(self.point)
    }

    pub fn finish(mut self) -> MtdCurve {
        let n = self.acc.len() as usize;
        if n >= 2 && self.checkpoints.last().is_none_or(|c| c.trace_count != n) {
            self.checkpoint();
        }
        let mut mtd = None;
        for cp in self.checkpoints.iter().rev() {
            if cp.rank != 1 {
                break;
            }
            mtd = Some(cp.trace_count);
        }
        MtdCurve { true_key: self.true_key, checkpoints: self.checkpoints, mtd }
    }
}

pub fn mtd<T: AsRef<[f64]>>(
    traces: &[T],
    plaintexts: &[Block],
    target_byte: usize,
    true_key: u8,
    checkpoint_step: usize,
    point: PointKind,
) -> Result<MtdCurve, DpaError> {
    let d = check_shape(traces, plaintexts, target_byte)?;
    let mut t = MtdTracker::new(target_byte, d, true_key, checkpoint_step, point)?;
    for (tr, p) in traces.iter().zip(plaintexts) {
        t.push(tr.as_ref(), p)?;
    }
    Ok(t.finish())
}

/// Per-guess max |rho| against trace count, at every checkpoint.
pub fn correlation_evolution<T: AsRef<[f64]>>(
    traces: &[T],
    plaintexts: &[Block],
    target_byte: usize,
    checkpoint_step: usize,
    point: PointKind,
) -> Result<Vec<(usize, Vec<f64>)>, DpaError> {
    let curve = mtd(traces, plaintexts, target_byte, 0, checkpoint_step, point)?;
    Ok(curve.checkpoints.into_iter().map(|c| (c.trace_count, c.max_abs_rho)).collect())
}
