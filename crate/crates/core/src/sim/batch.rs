//! Running the AES workload, alone or over many plaintexts.

use rayon::prelude::*;

use crate::aes::Block;
use crate::obfuscation::{next_round_keys, Lfsr, RoundKeys};
use crate::seed::derive_seed;

use super::machine::{program_cycles, schedule, Machine};
use super::power::{PowerSink, Tee};
use super::program::{aes_memory_image, aes_program, AesLayout, MicroOp};
use super::{CycleLog, PowerTrace, SimConfig, SimError};

/// LFSR seeded from the config seed (never zero).
pub fn lfsr_for(cfg: &SimConfig) -> Lfsr {
    let s = derive_seed(cfg.seed, "lfsr", 0);
    Lfsr::new(if s == 0 { 1 } else { s }).expect("non-zero seed")
}

/// Keys of epochs `0..count`, drawn in order from the config's LFSR.
pub fn epoch_keys(cfg: &SimConfig, count: u64) -> Vec<RoundKeys> {
    let mut lfsr = lfsr_for(cfg);
    (0..count)
        .map(|e| {
            let (mut keys, next) = next_round_keys(&lfsr);
            keys.epoch = e;
            lfsr = next;
            keys
        })
        .collect()
}

/// Key epoch of run `index` in a batch.
pub fn epoch_of(cfg: &SimConfig, index: u64) -> u64 {
    match cfg.rekey_interval_runs {
        Some(n) => index / n,
        None => 0,
    }
}

pub fn noise_seed(cfg: &SimConfig, run: u64) -> u64 {
    derive_seed(cfg.seed, "noise", run)
}

/// The AES program and its memory layout, built once.
#[derive(Debug, Clone)]
pub struct AesWorkload {
    pub layout: AesLayout,
    pub program: Vec<MicroOp>,
}

impl Default for AesWorkload {
    fn default() -> Self {
        let layout = AesLayout::default();
        Self { program: aes_program(&layout), layout }
    }
}

impl AesWorkload {
    pub fn cycles(&self) -> usize {
        program_cycles(&self.program)
    }

    /// Index of the S-box load for `byte` in `round` (1-based).
    pub fn sbox_load_index(&self, round: usize, byte: usize) -> usize {
        let nth = (round - 1) * 16 + byte;
        self.program
            .iter()
            .enumerate()
            .filter(|(_, op)| matches!(op, MicroOp::LoadByte { rs1: 8, .. }))
            .nth(nth)
            .map(|(i, _)| i)
            .expect("round in 1..=10 and byte < 16")
    }

    /// Cycle in which the S-box load for `byte` in `round` is in MEM.
    pub fn sbox_load_mem_cycle(&self, round: usize, byte: usize) -> usize {
        schedule(&self.program)[self.sbox_load_index(round, byte)].mem
    }

    /// Fresh machine with the workload's memory image.
    pub fn machine(&self, cfg: &SimConfig, keys: Option<RoundKeys>, plaintext: &Block, key: &Block) -> Result<Machine, SimError> {
        let mut m = match keys {
            Some(k) => Machine::with_keys(cfg, k)?,
            None => Machine::new(cfg)?,
        };
        for (addr, bytes) in aes_memory_image(&self.layout, plaintext, key) {
            m.write_bytes(addr, &bytes)?;
        }
        Ok(m)
    }

    pub fn ciphertext(&self, m: &Machine) -> Result<Block, SimError> {
        let v = m.read_bytes(self.layout.state, 16)?;
        Ok(v.try_into().expect("16 bytes"))
    }
}

/// One encryption on a fresh machine keyed for epoch 0.
pub fn run_workload(cfg: &SimConfig, plaintext: &Block, key: &Block) -> Result<(CycleLog, PowerTrace), SimError> {
    let w = AesWorkload::default();
    let keys = cfg.is_param().then(|| epoch_keys(cfg, 1)[0]);
    let mut m = w.machine(cfg, keys, plaintext, key)?;
    let mut log = CycleLog::new(m.layout().clone());
    let mut power = PowerSink::new(m.layout().words_per_cycle(), cfg.noise_sigma, noise_seed(cfg, 0));
    m.run(&w.program, &mut Tee(&mut log, &mut power), None)?;
    Ok((log, power.into_trace()))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchOptions {
    /// Keep only samples of cycles `[start, end)`; `None` keeps all.
    pub window: Option<(usize, usize)>,
    /// Stop simulating at the end of the window (no ciphertext then).
    pub stop_at_window_end: bool,
    /// Count only toggles of this module and its children (e.g. `dcache`).
    pub module: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub index: u64,
    pub epoch: u64,
    pub samples: Vec<f64>,
    pub ciphertext: Option<Block>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutput {
    pub runs: Vec<RunOutput>,
    pub cycles: usize,
}

impl BatchOutput {
    pub fn traces(&self) -> Vec<&[f64]> {
        self.runs.iter().map(|r| r.samples.as_slice()).collect()
    }

    /// Key epochs used, in order of first use.
    pub fn epochs(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.runs.iter().map(|r| r.epoch).collect();
        out.dedup();
        out
    }
}

fn run_one(
    w: &AesWorkload,
    cfg: &SimConfig,
    keys: &[RoundKeys],
    index: u64,
    plaintext: &Block,
    key: &Block,
    opts: &BatchOptions,
) -> Result<RunOutput, SimError> {
    let epoch = epoch_of(cfg, index);
    let mut m = w.machine(cfg, cfg.is_param().then(|| keys[epoch as usize]), plaintext, key)?;
    let (start, end) = opts.window.unwrap_or((0, usize::MAX));
    let mut sink =
        PowerSink::windowed(m.layout().words_per_cycle(), cfg.noise_sigma, noise_seed(cfg, index), start, end);
    if let Some(module) = &opts.module {
        sink = sink.with_mask(m.layout().word_mask(module));
    }
    let stop = (opts.stop_at_window_end && opts.window.is_some()).then_some(end);
    let ran = m.run(&w.program, &mut sink, stop)?;
    let ciphertext = if ran == w.cycles() { Some(w.ciphertext(&m)?) } else { None };
    Ok(RunOutput { index, epoch, samples: sink.samples, ciphertext })
}

/// Runs plaintexts in parallel chunks and hands results to `f` in run order.
/// Run `i` uses the keys of epoch `i / rekey_interval_runs` and its own
/// noise stream.
pub fn for_each_run(
    cfg: &SimConfig,
    plaintexts: &[Block],
    key: &Block,
    opts: &BatchOptions,
    mut f: impl FnMut(RunOutput),
) -> Result<(), SimError> {
    cfg.validate()?;
    let w = AesWorkload::default();
    let epochs = plaintexts.len().checked_sub(1).map_or(1, |last| epoch_of(cfg, last as u64) + 1);
    let keys = if cfg.is_param() { epoch_keys(cfg, epochs) } else { Vec::new() };
    const CHUNK: usize = 512;
    for (c, chunk) in plaintexts.chunks(CHUNK).enumerate() {
        let outs = chunk
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_one(&w, cfg, &keys, (c * CHUNK + i) as u64, p, key, opts))
            .collect::<Result<Vec<_>, _>>()?;
        outs.into_iter().for_each(&mut f);
    }
    Ok(())
}

pub fn run_batch(cfg: &SimConfig, plaintexts: &[Block], key: &Block, opts: &BatchOptions) -> Result<BatchOutput, SimError> {
    let mut runs = Vec::with_capacity(plaintexts.len());
    for_each_run(cfg, plaintexts, key, opts, |r| runs.push(r))?;
    Ok(BatchOutput { runs, cycles: AesWorkload::default().cycles() })
}

/// Cycle logs for each plaintext, for waveform export and SVF; the first
/// `max_cycles` cycles only when given.
pub fn run_logs(
    cfg: &SimConfig,
    plaintexts: &[Block],
    key: &Block,
    max_cycles: Option<usize>,
) -> Result<Vec<CycleLog>, SimError> {
    cfg.validate()?;
    let w = AesWorkload::default();
    let epochs = plaintexts.len().checked_sub(1).map_or(1, |last| epoch_of(cfg, last as u64) + 1);
    let keys = if cfg.is_param() { epoch_keys(cfg, epochs) } else { Vec::new() };
    plaintexts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let epoch = epoch_of(cfg, i as u64);
            let mut m = w.machine(cfg, cfg.is_param().then(|| keys[epoch as usize]), p, key)?;
            let mut log = CycleLog::new(m.layout().clone());
            m.run(&w.program, &mut log, max_cycles)?;
            Ok(log)
        })
        .collect()
}
