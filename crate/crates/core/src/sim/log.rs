//! Per-cycle record of every modeled state element.

use std::sync::{Arc, Mutex};

use crate::bits::words_for;
use crate::obfuscation::{deobfuscate32, deobfuscate64, AddressGeometry, AffineSpec, RoundKeys};

use super::CacheGeometry;

/// How a signal's payload is represented in param mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Never obfuscated.
    Plain,
    /// 64-bit word obfuscated as two 32-bit halves.
    Data,
    /// Obfuscated tag and set bits, plain offset bits.
    Address,
    /// Cache line, each 32-bit word obfuscated.
    Line,
    /// Physical set index: low bits of the obfuscated tag/set field.
    SetIndex,
    /// Physical tag: high bits of the obfuscated tag/set field.
    Tag,
    /// Replacement-dependent; differs between modes by design.
    Way,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalSpec {
    /// Module path below the top scope, e.g. `["core", "rf"]`.
    pub module: Vec<&'static str>,
    pub name: String,
    pub width: u32,
    pub encoding: Encoding,
}

impl SignalSpec {
    pub fn module_path(&self) -> String {
        self.module.join("/")
    }
}

/// Indices of signals the simulator writes, resolved once per layout.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Slots {
    pub rf: usize,
    pub prf: usize,
    pub rs1_val: usize,
    pub rs2_val: usize,
    pub em_result: usize,
    pub em_addr: usize,
    pub em_store: usize,
    pub mw_data: usize,
    pub alu_a: usize,
    pub alu_b: usize,
    pub alu_result: usize,
    pub fpu_rs1: usize,
    pub fpu_rs2: usize,
    pub md_rs1: usize,
    pub md_rs2: usize,
    pub bpu_target: usize,
    pub csr_status: usize,
    pub csr_instret: usize,
    pub set_index: usize,
    pub tag: usize,
    pub way: usize,
    pub wdata: usize,
    pub lb_line: usize,
    pub hb_word: usize,
}

pub const PRF_ENTRIES: usize = 8;

/// Signal list with word offsets into a flat per-cycle row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLayout {
    pub signals: Vec<SignalSpec>,
    offsets: Vec<usize>,
    words_per_cycle: usize,
    set_bits: u32,
}

impl LogLayout {
    pub fn new(signals: Vec<SignalSpec>, set_bits: u32) -> Self {
        let mut offsets = Vec::with_capacity(signals.len());
        let mut total = 0;
        for s in &signals {
            offsets.push(total);
            total += words_for(s.width);
        }
        Self { signals, offsets, words_per_cycle: total, set_bits }
    }

    /// [`for_cache`](Self::for_cache), built once per geometry and shared.
    pub fn shared(cache: &CacheGeometry) -> Arc<Self> {
        static CACHE: Mutex<Vec<(CacheGeometry, Arc<LogLayout>)>> = Mutex::new(Vec::new());
        let mut built = CACHE.lock().expect("layout cache");
        if let Some((_, l)) = built.iter().find(|(g, _)| g == cache) {
            return l.clone();
        }
        let l = Arc::new(Self::for_cache(cache));
        built.push((*cache, l.clone()));
        l
    }

    /// The simulated core and data cache.
    pub fn for_cache(cache: &CacheGeometry) -> Self {
        let mut s = Vec::new();
        let mut add = |module: &[&'static str], name: &str, width: u32, encoding: Encoding| {
            s.push(SignalSpec { module: module.to_vec(), name: name.to_string(), width, encoding });
        };
        for r in 1..32 {
            add(&["core", "rf"], &format!("x{r}"), 64, Encoding::Data);
        }
        for p in 0..PRF_ENTRIES {
            add(&["core", "prf"], &format!("p{p}"), 64, Encoding::Data);
        }
        add(&["core", "id_exe"], "rs1_val", 64, Encoding::Data);
        add(&["core", "id_exe"], "rs2_val", 64, Encoding::Data);
        add(&["core", "exe_mem"], "result", 64, Encoding::Data);
        add(&["core", "exe_mem"], "addr", 38, Encoding::Address);
        add(&["core", "exe_mem"], "store_data", 64, Encoding::Data);
        add(&["core", "mem_wb"], "data", 64, Encoding::Data);
        add(&["core", "alu"], "operand_a", 64, Encoding::Data);
        add(&["core", "alu"], "operand_b", 64, Encoding::Data);
        add(&["core", "alu"], "result", 64, Encoding::Data);
        add(&["core", "fpu"], "rs1", 64, Encoding::Data);
        add(&["core", "fpu"], "rs2", 64, Encoding::Data);
        add(&["core", "muldiv"], "rs1", 64, Encoding::Data);
        add(&["core", "muldiv"], "rs2", 64, Encoding::Data);
        add(&["core", "bpu"], "target", 64, Encoding::Data);
        add(&["core", "csr"], "status", 64, Encoding::Data);
        add(&["core", "csr"], "instret", 64, Encoding::Plain);
        add(&["dcache", "arrays"], "set_index", cache.set_bits().max(1), Encoding::SetIndex);
        add(&["dcache", "arrays"], "tag", cache.tag_bits(), Encoding::Tag);
        add(&["dcache", "arrays"], "way", cache.way_bits(), Encoding::Way);
        add(&["dcache", "arrays"], "wdata", 64, Encoding::Data);
        add(&["dcache", "lb"], "line", (cache.line_bytes * 8) as u32, Encoding::Line);
        add(&["dcache", "hb"], "word", 64, Encoding::Data);
        Self::new(s, cache.set_bits())
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn words_per_cycle(&self) -> usize {
        self.words_per_cycle
    }

    pub fn offset(&self, signal: usize) -> usize {
        self.offsets[signal]
    }

    pub fn valid_words(&self) -> usize {
        self.signals.len().div_ceil(64)
    }

    pub fn find(&self, module: &str, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name && module.split('/').eq(s.module.iter().copied()))
    }

    /// Row-word mask selecting the signals whose module path is `prefix` or
    /// lies below it.
    pub fn word_mask(&self, prefix: &str) -> Vec<u64> {
        let mut mask = vec![0; self.words_per_cycle];
        for (i, s) in self.signals.iter().enumerate() {
            let path = s.module_path();
            if path == prefix || path.starts_with(&format!("{prefix}/")) {
                let words = words_for(s.width);
                for w in 0..words {
                    let bits = if w + 1 == words && s.width % 64 != 0 { s.width % 64 } else { 64 };
                    mask[self.offsets[i] + w] = if bits == 64 { u64::MAX } else { (1 << bits) - 1 };
                }
            }
        }
        mask
    }

    /// Distinct module paths in first-appearance order.
    pub fn modules(&self) -> Vec<Vec<&'static str>> {
        let mut out: Vec<Vec<&'static str>> = Vec::new();
        for s in &self.signals {
            if !out.contains(&s.module) {
                out.push(s.module.clone());
            }
        }
        out
    }

    pub(crate) fn slots(&self) -> Slots {
        let f = |m: &str, n: &str| self.find(m, n).expect("standard layout signal");
        Slots {
            rf: f("core/rf", "x1"),
            prf: f("core/prf", "p0"),
            rs1_val: f("core/id_exe", "rs1_val"),
            rs2_val: f("core/id_exe", "rs2_val"),
            em_result: f("core/exe_mem", "result"),
            em_addr: f("core/exe_mem", "addr"),
            em_store: f("core/exe_mem", "store_data"),
            mw_data: f("core/mem_wb", "data"),
            alu_a: f("core/alu", "operand_a"),
            alu_b: f("core/alu", "operand_b"),
            alu_result: f("core/alu", "result"),
            fpu_rs1: f("core/fpu", "rs1"),
            fpu_rs2: f("core/fpu", "rs2"),
            md_rs1: f("core/muldiv", "rs1"),
            md_rs2: f("core/muldiv", "rs2"),
            bpu_target: f("core/bpu", "target"),
            csr_status: f("core/csr", "status"),
            csr_instret: f("core/csr", "instret"),
            set_index: f("dcache/arrays", "set_index"),
            tag: f("dcache/arrays", "tag"),
            way: f("dcache/arrays", "way"),
            wdata: f("dcache/arrays", "wdata"),
            lb_line: f("dcache/lb", "line"),
            hb_word: f("dcache/hb", "word"),
        }
    }

    /// Replaces every obfuscated payload in `row` by its plain value. Signals
    /// whose valid bit is clear (reset or precharge values, constants) are
    /// left as they are; replacement state (`way`) is zeroed.
    pub fn decode_row(
        &self,
        row: &mut [u64],
        valid: &[u64],
        keys: &RoundKeys,
        spec: &AffineSpec,
        geom: &AddressGeometry,
    ) {
        let is_valid = |i: usize| valid[i / 64] >> (i % 64) & 1 == 1;
        let mut set_index = None;
        let mut tag = None;
        for (i, s) in self.signals.iter().enumerate() {
            let o = self.offsets[i];
            match s.encoding {
                Encoding::Plain => {}
                Encoding::Way => row[o] = 0,
                _ if !is_valid(i) => {}
                Encoding::Data => row[o] = deobfuscate64(row[o], keys, spec),
                Encoding::Address => {
                    let tagset = deobfuscate32(geom.tagset(row[o]), keys, spec);
                    row[o] = geom.join(tagset, geom.offset(row[o]));
                }
                Encoding::Line => {
                    for w in &mut row[o..o + words_for(s.width)] {
                        *w = deobfuscate64(*w, keys, spec);
                    }
                }
                Encoding::SetIndex => set_index = Some(o),
                Encoding::Tag => tag = Some(o),
            }
        }
        if let (Some(so), Some(to)) = (set_index, tag) {
            let mask = (1u64 << self.set_bits) - 1;
            let tagset = ((row[to] << self.set_bits) | (row[so] & mask)) as u32;
            let plain = deobfuscate32(tagset, keys, spec) as u64;
            row[so] = plain & mask;
            row[to] = plain >> self.set_bits;
        }
    }
}

/// Values of every layout signal at every cycle.
///
/// Cycle `c` holds the state after the `c`-th rising clock edge (0-based).
/// The predecessor of cycle 0 is the all-zero reset state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleLog {
    pub layout: Arc<LogLayout>,
    /// `cycles * words_per_cycle` words.
    pub rows: Vec<u64>,
    /// `cycles * valid_words` bits: set when a signal holds a datapath
    /// payload (as opposed to a reset, precharge or constant value).
    pub valid: Vec<u64>,
}

impl CycleLog {
    pub fn new(layout: Arc<LogLayout>) -> Self {
        Self { layout, rows: Vec::new(), valid: Vec::new() }
    }

    pub fn cycles(&self) -> usize {
        let w = self.layout.words_per_cycle();
        if w == 0 { 0 } else { self.rows.len() / w }
    }

    pub fn row(&self, cycle: usize) -> &[u64] {
        let w = self.layout.words_per_cycle();
        &self.rows[cycle * w..(cycle + 1) * w]
    }

    pub fn valid_bits(&self, cycle: usize) -> &[u64] {
        let w = self.layout.valid_words();
        &self.valid[cycle * w..(cycle + 1) * w]
    }

    pub fn value(&self, cycle: usize, signal: usize) -> &[u64] {
        let o = self.layout.offset(signal);
        &self.row(cycle)[o..o + words_for(self.layout.signals[signal].width)]
    }

    pub fn is_valid(&self, cycle: usize, signal: usize) -> bool {
        self.valid_bits(cycle)[signal / 64] >> (signal % 64) & 1 == 1
    }

    pub fn push(&mut self, row: &[u64], valid: &[u64]) {
        self.rows.extend_from_slice(row);
        self.valid.extend_from_slice(valid);
    }

    /// Plain-value view of a param-mode log.
    pub fn decoded(&self, keys: &RoundKeys, spec: &AffineSpec, geom: &AddressGeometry) -> Vec<u64> {
        let mut out = self.rows.clone();
        let w = self.layout.words_per_cycle();
        for c in 0..self.cycles() {
            self.layout.decode_row(&mut out[c * w..(c + 1) * w], self.valid_bits(c), keys, spec, geom);
        }
        out
    }

    /// Same rows with replacement state zeroed, for comparing against a
    /// decoded param-mode log.
    pub fn without_replacement_state(&self) -> Vec<u64> {
        let mut out = self.rows.clone();
        let w = self.layout.words_per_cycle();
        let ways: Vec<usize> = (0..self.layout.len())
            .filter(|i| self.layout.signals[*i].encoding == Encoding::Way)
            .map(|i| self.layout.offset(i))
            .collect();
        for c in 0..self.cycles() {
            for o in &ways {
                out[c * w + o] = 0;
            }
        }
        out
    }
}

impl LogLayout {
    /// Inverse of [`Self::decode_row`] for signals with the valid bit set.
    pub fn encode_row(
        &self,
        row: &mut [u64],
        valid: &[u64],
        keys: &RoundKeys,
        spec: &AffineSpec,
        geom: &AddressGeometry,
    ) {
        use crate::obfuscation::{obfuscate32, obfuscate64};
        let is_valid = |i: usize| valid[i / 64] >> (i % 64) & 1 == 1;
        let mut set_index = None;
        let mut tag = None;
        for (i, s) in self.signals.iter().enumerate() {
            let o = self.offsets[i];
            match s.encoding {
                Encoding::Plain | Encoding::Way => {}
                _ if !is_valid(i) => {}
                Encoding::Data => row[o] = obfuscate64(row[o], keys, spec),
                Encoding::Address => {
                    let tagset = obfuscate32(geom.tagset(row[o]), keys, spec);
                    row[o] = geom.join(tagset, geom.offset(row[o]));
                }
                Encoding::Line => {
                    for w in &mut row[o..o + words_for(s.width)] {
                        *w = obfuscate64(*w, keys, spec);
                    }
                }
                Encoding::SetIndex => set_index = Some(o),
                Encoding::Tag => tag = Some(o),
            }
        }
        if let (Some(so), Some(to)) = (set_index, tag) {
            let mask = (1u64 << self.set_bits) - 1;
            let tagset = ((row[to] << self.set_bits) | (row[so] & mask)) as u32;
            let enc = obfuscate32(tagset, keys, spec) as u64;
            row[so] = enc & mask;
            row[to] = enc >> self.set_bits;
        }
    }
}
