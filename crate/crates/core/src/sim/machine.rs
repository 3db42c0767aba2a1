//! Cycle-level model of a 5-stage in-order core with a write-back data
//! cache.
//!
//! Instructions flow IF, ID, EX, MEM, WB one per cycle, with full
//! forwarding and a one-cycle bubble when an instruction consumes the result
//! of the load right before it. Cache hits and misses both complete in the
//! MEM cycle, so the cycle count depends only on the program.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bits::words_for;
use crate::obfuscation::{
    deobfuscate32, deobfuscate64, next_round_keys, obfuscate32, obfuscate64, AddressGeometry, Lfsr, RoundKeys,
};
use crate::seed::derive_seed;

use super::log::{LogLayout, Slots, PRF_ENTRIES};
use super::program::{MicroOp, Operand};
use super::{CycleLog, SimConfig, SimError};

/// Receives the state of every cycle in order.
/// Machine-mode status word held in `csr/status`; written once at reset.
pub const STATUS_RESET: u64 = 0x1800;

pub trait CycleSink {
    fn cycle(&mut self, row: &[u64], valid: &[u64]);
}

impl CycleSink for CycleLog {
    fn cycle(&mut self, row: &[u64], valid: &[u64]) {
        self.push(row, valid);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstrTiming {
    pub ex: usize,
    pub mem: usize,
    pub wb: usize,
}

/// First instruction reaches EX at cycle 2.
pub fn schedule(program: &[MicroOp]) -> Vec<InstrTiming> {
    let mut out: Vec<InstrTiming> = Vec::with_capacity(program.len());
    for (i, op) in program.iter().enumerate() {
        let ex = match i {
            0 => 2,
            _ => {
                let prev = &program[i - 1];
                let stall = prev.is_load() && prev.dest().is_some_and(|d| op.sources().contains(&Some(d)));
                out[i - 1].ex + 1 + stall as usize
            }
        };
        out.push(InstrTiming { ex, mem: ex + 1, wb: ex + 2 });
    }
    out
}

/// Cycles needed to retire the whole program.
pub fn program_cycles(program: &[MicroOp]) -> usize {
    schedule(program).last().map_or(0, |t| t.wb + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccessKind {
    #[default]
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessResult {
    pub hit: bool,
    pub set: usize,
    pub way: usize,
    /// Loaded byte, or the byte stored.
    pub value: u8,
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    valid: bool,
    dirty: bool,
    tag: u32,
    data: [u64; 8],
}

#[derive(Debug, Clone, Copy, Default)]
struct InFlight {
    value: u64,
    addr: u64,
    store: u64,
}

/// Architectural and microarchitectural state of one core instance.
#[derive(Debug, Clone)]
pub struct Machine {
    cfg: SimConfig,
    layout: Arc<LogLayout>,
    slots: Slots,
    geom: AddressGeometry,
    keys: Option<RoundKeys>,
    lfsr: Option<Lfsr>,
    memory: HashMap<u32, [u8; 64]>,
    lines: Vec<Line>,
    round_robin: Vec<usize>,
    /// Latest produced value of each register, as held in the datapath.
    arch: [u64; 32],
    prf_next: usize,
    row: Vec<u64>,
    valid: Vec<u64>,
    instret: u64,
}

fn line_words(bytes: &[u8; 64]) -> [u64; 8] {
    core::array::from_fn(|i| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes")))
}

fn line_bytes(words: &[u64; 8]) -> [u8; 64] {
    let mut out = [0u8; 64];
    for (i, w) in words.iter().enumerate() {
        out[i * 8..i * 8 + 8].copy_from_slice(&w.to_le_bytes());
    }
    out
}

impl Machine {
    /// Baseline machine, or a param machine keyed from the LFSR seeded by
    /// `cfg.seed`.
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        let lfsr = super::batch::lfsr_for(cfg);
        let (keys, lfsr) = next_round_keys(&lfsr);
        Self::build(cfg, cfg.is_param().then_some(keys), cfg.is_param().then_some(lfsr))
    }

    /// Param machine with explicit keys; baseline configs ignore them.
    pub fn with_keys(cfg: &SimConfig, keys: RoundKeys) -> Result<Self, SimError> {
        let lfsr = super::batch::lfsr_for(cfg);
        Self::build(cfg, cfg.is_param().then_some(keys), cfg.is_param().then_some(lfsr))
    }

    fn build(cfg: &SimConfig, keys: Option<RoundKeys>, lfsr: Option<Lfsr>) -> Result<Self, SimError> {
        cfg.validate()?;
        let layout = LogLayout::shared(&cfg.cache);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "replacement", 0));
        let round_robin = (0..cfg.cache.sets).map(|_| rng.random_range(0..cfg.cache.ways)).collect();
        let mut m = Self {
            slots: layout.slots(),
            geom: cfg.cache.address(),
            keys,
            lfsr,
            memory: HashMap::new(),
            lines: vec![Line::default(); cfg.cache.sets * cfg.cache.ways],
            round_robin,
            arch: [0; 32],
            prf_next: 0,
            row: vec![0; layout.words_per_cycle()],
            valid: vec![0; layout.valid_words()],
            instret: 0,
            layout,
            cfg: cfg.clone(),
        };
        m.set(m.slots.csr_status, m.enc(STATUS_RESET), true);
        Ok(m)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Arc<LogLayout> {
        &self.layout
    }

    pub fn keys(&self) -> Option<&RoundKeys> {
        self.keys.as_ref()
    }

    pub fn address_geometry(&self) -> &AddressGeometry {
        &self.geom
    }

    /// Current state of every logged element.
    pub fn state_row(&self) -> (&[u64], &[u64]) {
        (&self.row, &self.valid)
    }

    fn enc(&self, v: u64) -> u64 {
        match &self.keys {
            Some(k) => obfuscate64(v, k, &self.cfg.affine),
            None => v,
        }
    }

    fn dec(&self, v: u64) -> u64 {
        match &self.keys {
            Some(k) => deobfuscate64(v, k, &self.cfg.affine),
            None => v,
        }
    }

    fn enc_tagset(&self, t: u32) -> u32 {
        match &self.keys {
            Some(k) => obfuscate32(t, k, &self.cfg.affine),
            None => t,
        }
    }

    fn dec_tagset(&self, t: u32) -> u32 {
        match &self.keys {
            Some(k) => deobfuscate32(t, k, &self.cfg.affine),
            None => t,
        }
    }

    fn set(&mut self, signal: usize, value: u64, valid: bool) {
        let o = self.layout.offset(signal);
        self.row[o] = value;
        self.mark(signal, valid);
    }

    fn mark(&mut self, signal: usize, valid: bool) {
        let (w, b) = (signal / 64, signal % 64);
        if valid {
            self.valid[w] |= 1 << b;
        } else {
            self.valid[w] &= !(1 << b);
        }
    }

    /// Plain value of an architectural register.
    pub fn register(&self, r: u8) -> u64 {
        if r == 0 { 0 } else { self.dec(self.arch[r as usize]) }
    }

    fn operand(&self, r: u8) -> u64 {
        if r == 0 { self.enc(0) } else { self.arch[r as usize] }
    }

    fn check_addr(&self, addr: u64) -> Result<(), SimError> {
        if addr & !self.geom.address_mask() != 0 {
            return Err(SimError::AddressOutOfRange { addr, width: self.geom.address_width() });
        }
        Ok(())
    }

    /// Physical (set, tag) of an address; in param mode the tag/set field is
    /// obfuscated first.
    pub fn placement(&self, addr: u64) -> (usize, u32) {
        let phys = self.enc_tagset(self.geom.tagset(addr));
        let set_bits = self.cfg.cache.set_bits();
        ((phys as usize) & (self.cfg.cache.sets - 1), if set_bits == 32 { 0 } else { phys >> set_bits })
    }

    fn find_way(&self, set: usize, tag: u32) -> Option<usize> {
        let ways = self.cfg.cache.ways;
        (0..ways).find(|w| {
            let l = &self.lines[set * ways + w];
            l.valid && l.tag == tag
        })
    }

    fn line_tagset(&self, set: usize, tag: u32) -> u32 {
        let set_bits = self.cfg.cache.set_bits();
        let phys = if set_bits == 32 { set as u32 } else { (tag << set_bits) | set as u32 };
        self.dec_tagset(phys)
    }

    fn write_back(&mut self, set: usize, way: usize) {
        let l = self.lines[set * self.cfg.cache.ways + way];
        let plain: [u64; 8] = core::array::from_fn(|i| self.dec(l.data[i]));
        let tagset = self.line_tagset(set, l.tag);
        self.memory.insert(tagset, line_bytes(&plain));
    }

    /// Returns (way, hit). Fills on a miss, staging the line in the line
    /// buffer and copying the critical word to the PRF when `log` is set.
    fn lookup_or_fill(&mut self, addr: u64, log: bool) -> (usize, usize, bool) {
        let (set, tag) = self.placement(addr);
        let ways = self.cfg.cache.ways;
        if let Some(w) = self.find_way(set, tag) {
            return (set, w, true);
        }
        let victim = match (0..ways).find(|w| !self.lines[set * ways + w].valid) {
            Some(w) => w,
            None => {
                let w = self.round_robin[set];
                self.round_robin[set] = (w + 1) % ways;
                w
            }
        };
        let old = self.lines[set * ways + victim];
        if old.valid && old.dirty {
            self.write_back(set, victim);
        }
        let plain = line_words(self.memory.get(&self.geom.tagset(addr)).unwrap_or(&[0; 64]));
        let data: [u64; 8] = core::array::from_fn(|i| self.enc(plain[i]));
        self.lines[set * ways + victim] = Line { valid: true, dirty: false, tag, data };
        if log {
            let o = self.layout.offset(self.slots.lb_line);
            self.row[o..o + 8].copy_from_slice(&data);
            self.mark(self.slots.lb_line, true);
            let critical = data[self.word_index(addr)];
            self.write_prf(critical);
        }
        (set, victim, false)
    }

    fn word_index(&self, addr: u64) -> usize {
        ((addr & self.geom.offset_mask()) / 8) as usize
    }

    fn write_prf(&mut self, value: u64) {
        let slot = self.slots.prf + self.prf_next;
        self.set(slot, value, true);
        self.prf_next = (self.prf_next + 1) % PRF_ENTRIES;
    }

    /// One data cache access in the MEM stage. Stores take the plain byte.
    pub fn cache_access(&mut self, addr: u64, kind: AccessKind, data: u8) -> Result<AccessResult, SimError> {
        self.check_addr(addr)?;
        let (set, way, hit) = self.lookup_or_fill(addr, true);
        let idx = set * self.cfg.cache.ways + way;
        let w = self.word_index(addr);
        let shift = 8 * (addr & 7);
        let enc_word = self.lines[idx].data[w];
        let plain_word = self.dec(enc_word);
        let value = match kind {
            AccessKind::Load => {
                self.set(self.slots.hb_word, enc_word, true);
                (plain_word >> shift) as u8
            }
            AccessKind::Store => {
                let new_word = (plain_word & !(0xFF << shift)) | ((data as u64) << shift);
                let enc = self.enc(new_word);
                self.lines[idx].data[w] = enc;
                self.lines[idx].dirty = true;
                self.set(self.slots.wdata, enc, true);
                data
            }
        };
        self.set(self.slots.set_index, set as u64, true);
        self.set(self.slots.tag, self.lines[idx].tag as u64, true);
        self.set(self.slots.way, way as u64, true);
        Ok(AccessResult { hit, set, way, value })
    }

    /// Host write into memory, kept coherent with the cache without logging.
    pub fn write_bytes(&mut self, addr: u64, bytes: &[u8]) -> Result<(), SimError> {
        let line = self.cfg.cache.line_bytes as u64;
        let mut i = 0usize;
        while i < bytes.len() {
            let a = addr + i as u64;
            self.check_addr(a)?;
            let n = ((line - (a & (line - 1))) as usize).min(bytes.len() - i);
            self.check_addr(a + n as u64 - 1)?;
            let ts = self.geom.tagset(a);
            let off = (a & self.geom.offset_mask()) as usize;
            self.memory.entry(ts).or_insert([0; 64])[off..off + n].copy_from_slice(&bytes[i..i + n]);
            let (set, tag) = self.placement(a);
            if let Some(way) = self.find_way(set, tag) {
                let idx = set * self.cfg.cache.ways + way;
                for (j, b) in bytes[i..i + n].iter().enumerate() {
                    let a = a + j as u64;
                    let w = self.word_index(a);
                    let shift = 8 * (a & 7);
                    let plain = self.dec(self.lines[idx].data[w]);
                    self.lines[idx].data[w] = self.enc((plain & !(0xFF << shift)) | ((*b as u64) << shift));
                }
            }
            i += n;
        }
        Ok(())
    }

    /// Host read through the cache.
    pub fn read_bytes(&self, addr: u64, len: usize) -> Result<Vec<u8>, SimError> {
        (0..len as u64)
            .map(|i| {
                let a = addr + i;
                self.check_addr(a)?;
                let (set, tag) = self.placement(a);
                Ok(match self.find_way(set, tag) {
                    Some(way) => {
                        let word = self.dec(self.lines[set * self.cfg.cache.ways + way].data[self.word_index(a)]);
                        (word >> (8 * (a & 7))) as u8
                    }
                    None => self.memory_byte(a),
                })
            })
            .collect()
    }

    /// Byte as held in backing memory, ignoring the cache.
    pub fn memory_byte(&self, addr: u64) -> u8 {
        let off = (addr & self.geom.offset_mask()) as usize;
        self.memory.get(&self.geom.tagset(addr)).map_or(0, |l| l[off])
    }

    pub fn is_cached(&self, addr: u64) -> bool {
        let (set, tag) = self.placement(addr);
        self.find_way(set, tag).is_some()
    }

    pub fn is_dirty(&self, addr: u64) -> bool {
        let (set, tag) = self.placement(addr);
        self.find_way(set, tag).is_some_and(|w| self.lines[set * self.cfg.cache.ways + w].dirty)
    }

    /// Writes back dirty lines with the old keys, invalidates the cache,
    /// draws new keys from the LFSR and re-encrypts every register and
    /// buffer under them.
    pub fn rekey_flush(&mut self) -> Result<RoundKeys, SimError> {
        let (Some(old), Some(lfsr)) = (self.keys, self.lfsr) else {
            return Err(SimError::RekeyInBaseline);
        };
        let ways = self.cfg.cache.ways;
        for set in 0..self.cfg.cache.sets {
            for way in 0..ways {
                let l = self.lines[set * ways + way];
                if l.valid && l.dirty {
                    self.write_back(set, way);
                }
                self.lines[set * ways + way].valid = false;
            }
        }
        let (mut new, next) = next_round_keys(&lfsr);
        new.epoch = old.epoch + 1;
        let spec = self.cfg.affine;
        self.layout.decode_row(&mut self.row, &self.valid, &old, &spec, &self.geom);
        self.layout.encode_row(&mut self.row, &self.valid, &new, &spec, &self.geom);
        for r in 1..32 {
            self.arch[r] = obfuscate64(deobfuscate64(self.arch[r], &old, &spec), &new, &spec);
        }
        self.keys = Some(new);
        self.lfsr = Some(next);
        Ok(new)
    }

    /// Runs a straight-line program, reporting every cycle to `sink`.
    /// Stops after `max_cycles` cycles when given. Returns cycles reported.
    pub fn run(
        &mut self,
        program: &[MicroOp],
        sink: &mut impl CycleSink,
        max_cycles: Option<usize>,
    ) -> Result<usize, SimError> {
        let timing = schedule(program);
        let total = timing.last().map_or(0, |t| t.wb + 1);
        let total = max_cycles.map_or(total, |m| m.min(total));
        let mut flight = vec![InFlight::default(); program.len()];
        let mut last_writer: [Option<usize>; 32] = [None; 32];
        let mut writer_at_ex: Vec<[Option<usize>; 2]> = vec![[None; 2]; program.len()];
        let (mut next_ex, mut next_mem, mut next_wb) = (0usize, 0usize, 0usize);
        let s = self.slots;
        for c in 0..total {
            // Precharge: cache access lines and buffers idle at zero.
            for sig in [s.set_index, s.tag, s.way, s.wdata, s.hb_word] {
                self.set(sig, 0, false);
            }
            let lb = self.layout.offset(s.lb_line);
            let lb_words = words_for(self.layout.signals[s.lb_line].width);
            self.row[lb..lb + lb_words].fill(0);
            self.mark(s.lb_line, false);

            if next_wb < program.len() && timing[next_wb].wb == c {
                let i = next_wb;
                if let Some(rd) = program[i].dest() {
                    self.set(s.rf + rd as usize - 1, flight[i].value, true);
                    self.set(s.mw_data, flight[i].value, true);
                }
                self.instret += 1;
                self.set(s.csr_instret, self.instret, false);
                next_wb += 1;
            }
            if next_mem < program.len() && timing[next_mem].mem == c {
                let i = next_mem;
                match program[i] {
                    MicroOp::Alu { .. } => self.set(s.em_result, flight[i].value, true),
                    MicroOp::LoadByte { .. } => {
                        let addr = flight[i].addr;
                        self.set(s.em_addr, self.obf_addr(addr), true);
                        let r = self.cache_access(addr, AccessKind::Load, 0)?;
                        flight[i].value = self.enc(r.value as u64);
                        if let Some(rd) = program[i].dest() {
                            self.arch[rd as usize] = flight[i].value;
                        }
                    }
                    MicroOp::StoreByte { .. } => {
                        let addr = flight[i].addr;
                        self.set(s.em_addr, self.obf_addr(addr), true);
                        self.set(s.em_store, flight[i].store, true);
                        let byte = self.dec(flight[i].store) as u8;
                        self.cache_access(addr, AccessKind::Store, byte)?;
                    }
                }
                next_mem += 1;
            }
            if next_ex < program.len() && timing[next_ex].ex == c {
                let i = next_ex;
                let op = program[i];
                for (k, src) in op.sources().iter().enumerate() {
                    if let Some(r) = src.filter(|r| *r != 0) {
                        writer_at_ex[i][k] = last_writer[r as usize];
                    }
                }
                // Operands still in flight come over the forwarding path and
                // land in the PRF.
                for (k, src) in op.sources().iter().enumerate() {
                    if let (Some(r), Some(w)) = (src, writer_at_ex[i][k]) {
                        if timing[w].wb >= c {
                            let v = self.arch[*r as usize];
                            self.write_prf(v);
                        }
                    }
                }
                self.execute(op, &mut flight[i])?;
                if let Some(rd) = op.dest() {
                    last_writer[rd as usize] = Some(i);
                }
                next_ex += 1;
            }
            sink.cycle(&self.row, &self.valid);
        }
        Ok(total)
    }

    fn obf_addr(&self, addr: u64) -> u64 {
        self.geom.join(self.enc_tagset(self.geom.tagset(addr)), self.geom.offset(addr))
    }

    fn execute(&mut self, op: MicroOp, f: &mut InFlight) -> Result<(), SimError> {
        let s = self.slots;
        match op {
            MicroOp::Alu { op: alu, rd, rs1, src2 } => {
                let a_enc = self.operand(rs1);
                let b_enc = match src2 {
                    Operand::Reg(r) => self.operand(r),
                    Operand::Imm(v) => self.enc(v),
                };
                self.set(s.rs1_val, a_enc, true);
                self.set(s.rs2_val, b_enc, true);
                let result = alu.apply(self.dec(a_enc), self.dec(b_enc));
                let r_enc = self.enc(result);
                self.set(s.alu_a, a_enc, true);
                self.set(s.alu_b, b_enc, true);
                self.set(s.alu_result, r_enc, true);
                if self.cfg.eda_fix {
                    for sig in [s.fpu_rs1, s.fpu_rs2, s.md_rs1, s.md_rs2, s.bpu_target] {
                        self.set(sig, 1, false);
                    }
                } else {
                    self.set(s.fpu_rs1, a_enc, true);
                    self.set(s.fpu_rs2, b_enc, true);
                    self.set(s.md_rs1, a_enc, true);
                    self.set(s.md_rs2, b_enc, true);
                    self.set(s.bpu_target, r_enc, true);
                }
                f.value = r_enc;
                if rd != 0 {
                    self.arch[rd as usize] = r_enc;
                }
            }
            MicroOp::LoadByte { rs1, offset, .. } => {
                let base = self.operand(rs1);
                self.set(s.rs1_val, base, true);
                self.set(s.rs2_val, self.enc(offset), true);
                f.addr = self.dec(base).wrapping_add(offset);
                self.check_addr(f.addr)?;
            }
            MicroOp::StoreByte { rs2, rs1, offset } => {
                let base = self.operand(rs1);
                let data = self.operand(rs2);
                self.set(s.rs1_val, base, true);
                self.set(s.rs2_val, data, true);
                f.addr = self.dec(base).wrapping_add(offset);
                f.store = data;
                self.check_addr(f.addr)?;
            }
        }
        Ok(())
    }
}
