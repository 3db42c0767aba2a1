//! Sample-and-hold resampling of a dump onto rising clock edges.

use crate::bits::{append_bits, words_for, BitVec};

use super::{IngestError, ModuleNode, WaveDump};

/// Per-cycle values of every declared signal, in declaration order.
///
/// Storage is a flat row-major array: `words_per_cycle` words per cycle, each
/// signal occupying `words_for(width)` consecutive words. Masks for x and z
/// bits are only allocated when some unknown value was sampled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleMatrix {
    widths: Vec<u32>,
    offsets: Vec<usize>,
    words_per_cycle: usize,
    cycles: usize,
    values: Vec<u64>,
    x: Option<Vec<u64>>,
    z: Option<Vec<u64>>,
    edge_times: Vec<u64>,
}

fn layout(widths: &[u32]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(widths.len());
    let mut total = 0;
    for w in widths {
        offsets.push(total);
        total += words_for(*w);
    }
    (offsets, total)
}

impl CycleMatrix {
    /// Builds a two-state matrix from raw rows (`cycles * words_per_cycle`).
    pub fn from_rows(widths: Vec<u32>, values: Vec<u64>) -> Self {
        let (offsets, words_per_cycle) = layout(&widths);
        let cycles = if words_per_cycle == 0 { 0 } else { values.len() / words_per_cycle };
        Self { widths, offsets, words_per_cycle, cycles, values, x: None, z: None, edge_times: Vec::new() }
    }

    pub fn cycles(&self) -> usize {
        self.cycles
    }

    pub fn signal_count(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[u32] {
        &self.widths
    }

    pub fn edge_times(&self) -> &[u64] {
        &self.edge_times
    }

    pub fn words_per_cycle(&self) -> usize {
        self.words_per_cycle
    }

    /// Known-value words of one signal at one cycle (unknowns read 0).
    pub fn words(&self, cycle: usize, signal: usize) -> &[u64] {
        let start = cycle * self.words_per_cycle + self.offsets[signal];
        &self.values[start..start + words_for(self.widths[signal])]
    }

    pub fn row(&self, cycle: usize) -> &[u64] {
        &self.values[cycle * self.words_per_cycle..(cycle + 1) * self.words_per_cycle]
    }

    fn mask_words<'a>(&self, mask: &'a Option<Vec<u64>>, cycle: usize, signal: usize) -> Option<&'a [u64]> {
        let start = cycle * self.words_per_cycle + self.offsets[signal];
        mask.as_ref().map(|m| &m[start..start + words_for(self.widths[signal])])
    }

    pub fn cell(&self, cycle: usize, signal: usize) -> BitVec {
        BitVec::from_parts(
            self.widths[signal],
            self.words(cycle, signal),
            self.mask_words(&self.x, cycle, signal),
            self.mask_words(&self.z, cycle, signal),
        )
    }

    /// Count of x/z bits for one signal at one cycle.
    pub fn unknown_bits(&self, cycle: usize, signal: usize) -> u32 {
        let count = |m: Option<&[u64]>| m.map_or(0, |w| w.iter().map(|v| v.count_ones()).sum());
        count(self.mask_words(&self.x, cycle, signal)) + count(self.mask_words(&self.z, cycle, signal))
    }

    pub fn has_unknowns(&self) -> bool {
        self.x.is_some() || self.z.is_some()
    }

    /// Keeps the first `cycles` cycles.
    pub fn truncate(&mut self, cycles: usize) {
        if cycles >= self.cycles {
            return;
        }
        self.cycles = cycles;
        let n = cycles * self.words_per_cycle;
        self.values.truncate(n);
        for m in [&mut self.x, &mut self.z].into_iter().flatten() {
            m.truncate(n);
        }
        self.edge_times.truncate(cycles);
    }
}

pub fn resample_per_cycle(dump: &WaveDump, clock_name: &str) -> Result<CycleMatrix, IngestError> {
    let clock = dump
        .find_signal(clock_name)
        .ok_or_else(|| IngestError::ClockNotFound(clock_name.to_string()))?;
    if dump.declarations[clock].width != 1 {
        return Err(IngestError::ClockNotFound(format!("{clock_name} is not a 1-bit signal")));
    }
    let widths: Vec<u32> = dump.declarations.iter().map(|d| d.width).collect();
    let (offsets, words_per_cycle) = layout(&widths);

    // Everything starts unknown until its first change.
    let mut cur = vec![0u64; words_per_cycle];
    let mut cur_x = vec![0u64; words_per_cycle];
    let mut cur_z = vec![0u64; words_per_cycle];
    for (i, w) in widths.iter().enumerate() {
        append_bits(&mut cur_x[offsets[i]..], 0, &vec![u64::MAX; words_for(*w)], *w);
    }

    let mut values = Vec::new();
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    let mut edge_times = Vec::new();
    let mut any_unknown = false;

    let clock_level = |v: &[u64], x: &[u64], z: &[u64]| -> Option<bool> {
        let o = offsets[clock];
        ((x[o] | z[o]) & 1 == 0).then_some(v[o] & 1 == 1)
    };

    let changes = &dump.changes;
    let mut i = 0;
    while i < changes.len() {
        let t = changes[i].time;
        let before = clock_level(&cur, &cur_x, &cur_z);
        while i < changes.len() && changes[i].time == t {
            let ch = &changes[i];
            let o = offsets[ch.signal];
            let n = words_for(widths[ch.signal]);
            cur[o..o + n].copy_from_slice(ch.value.words());
            match ch.value.x_mask() {
                Some(m) => cur_x[o..o + n].copy_from_slice(m),
                None => cur_x[o..o + n].fill(0),
            }
            match ch.value.z_mask() {
                Some(m) => cur_z[o..o + n].copy_from_slice(m),
                None => cur_z[o..o + n].fill(0),
            }
            i += 1;
        }
        let after = clock_level(&cur, &cur_x, &cur_z);
        if after == Some(true) && before != Some(true) {
            values.extend_from_slice(&cur);
            let unknown = cur_x.iter().chain(cur_z.iter()).any(|w| *w != 0);
            any_unknown |= unknown;
            xs.extend_from_slice(&cur_x);
            zs.extend_from_slice(&cur_z);
            edge_times.push(t);
        }
    }

    if edge_times.is_empty() {
        return Err(IngestError::NoClockEdges(clock_name.to_string()));
    }
    let cycles = edge_times.len();
    let nonzero = |m: Vec<u64>| m.iter().any(|w| *w != 0).then_some(m);
    let (x, z) = if any_unknown { (nonzero(xs), nonzero(zs)) } else { (None, None) };
    Ok(CycleMatrix { widths, offsets, words_per_cycle, cycles, values, x, z, edge_times })
}

/// `S_1 || S_2 || ... || S_n` of a module's own signals, per cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordSeries {
    pub width: u32,
    pub words_per_cycle: usize,
    pub cycles: usize,
    /// Concatenated known-value words, `cycles * words_per_cycle`.
    pub words: Vec<u64>,
    /// x/z bit count per cycle.
    pub unknown_bits: Vec<u32>,
}

impl WordSeries {
    pub fn at(&self, cycle: usize) -> &[u64] {
        &self.words[cycle * self.words_per_cycle..(cycle + 1) * self.words_per_cycle]
    }

    pub fn bitvec(&self, cycle: usize) -> BitVec {
        BitVec::from_words(self.at(cycle), self.width)
    }
}

/// Signals are concatenated in declaration order, the first declared signal
/// most significant. Sub-module signals are not included.
pub fn module_word_series(matrix: &CycleMatrix, node: &ModuleNode) -> Result<WordSeries, IngestError> {
    if node.signals.is_empty() {
        return Err(IngestError::EmptyModule(node.path.join("/")));
    }
    let width: u32 = node.signals.iter().map(|s| matrix.widths[*s]).sum();
    let wpc = words_for(width);
    let mut words = vec![0u64; matrix.cycles * wpc];
    let mut unknown_bits = vec![0u32; matrix.cycles];
    for c in 0..matrix.cycles {
        let dst = &mut words[c * wpc..(c + 1) * wpc];
        let mut offset = 0;
        for &s in node.signals.iter().rev() {
            append_bits(dst, offset, matrix.words(c, s), matrix.widths[s]);
            offset += matrix.widths[s];
        }
        if matrix.has_unknowns() {
            unknown_bits[c] = node.signals.iter().map(|s| matrix.unknown_bits(c, *s)).sum();
        }
    }
    Ok(WordSeries { width, words_per_cycle: wpc, cycles: matrix.cycles, words, unknown_bits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_vcd;

    fn dump_with(body: &str) -> WaveDump {
        let text = format!(
            "$scope module top $end\n$var wire 1 ! clk $end\n$var reg 4 \" a $end\n$var reg 4 # b $end\n$upscope $end\n$enddefinitions $end\n{body}"
        );
        parse_vcd(text.as_bytes()).unwrap()
    }

    fn clocked(edges: usize, extra: &[(u64, &str)]) -> String {
        let mut events: Vec<(u64, String)> = Vec::new();
        for e in 0..edges as u64 {
            events.push((10 * e + 5, "1!".into()));
            events.push((10 * e + 10, "0!".into()));
        }
        for (t, s) in extra {
            events.push((*t, s.to_string()));
        }
        events.sort_by_key(|(t, _)| *t);
        let mut out = String::from("#0\n$dumpvars\n0!\nb0001 \"\nb0000 #\n$end\n");
        let mut last = None;
        for (t, s) in events {
            if last != Some(t) {
                out.push_str(&format!("#{t}\n"));
                last = Some(t);
            }
            out.push_str(&s);
            out.push('\n');
        }
        out
    }

    #[test]
    fn constant_signal_holds() {
        let d = dump_with(&clocked(5, &[]));
        let m = resample_per_cycle(&d, "clk").unwrap();
        assert_eq!(m.cycles(), 5);
        for c in 0..5 {
            assert_eq!(m.cell(c, 1), BitVec::from_u64(1, 4));
        }
    }

    #[test]
    fn change_between_edges() {
        // edges at 5, 15, 25, 35, 45; change lands between edge 2 and 3
        let d = dump_with(&clocked(5, &[(20, "b1111 \"")]));
        let m = resample_per_cycle(&d, "clk").unwrap();
        let got: Vec<u64> = (0..5).map(|c| m.cell(c, 1).low_u64()).collect();
        assert_eq!(got, vec![1, 1, 15, 15, 15]);
    }

    #[test]
    fn missing_clock_and_no_edges() {
        let d = dump_with("#0\n0!\n");
        assert!(matches!(resample_per_cycle(&d, "nope"), Err(IngestError::ClockNotFound(_))));
        assert!(matches!(resample_per_cycle(&d, "clk"), Err(IngestError::NoClockEdges(_))));
        assert!(matches!(resample_per_cycle(&d, "a"), Err(IngestError::ClockNotFound(_))));
    }

    #[test]
    fn unknown_until_first_change() {
        let text = "$scope module top $end\n$var wire 1 ! clk $end\n$var reg 2 \" a $end\n$upscope $end\n$enddefinitions $end\n#0\n1!\n#10\n0!\nb1 \"\n#20\n1!\n";
        let d = parse_vcd(text.as_bytes()).unwrap();
        let m = resample_per_cycle(&d, "top.clk").unwrap();
        assert_eq!(m.cell(0, 1).to_binary(), "xx");
        assert_eq!(m.cell(1, 1).to_binary(), "01");
        assert_eq!(m.unknown_bits(0, 1), 2);
    }

    #[test]
    fn word_series_concatenates_own_signals() {
        let d = dump_with(&clocked(2, &[(0, "b1010 \""), (0, "b0110 #")]));
        let m = resample_per_cycle(&d, "clk").unwrap();
        let top = d.hierarchy.find(&["top"]).unwrap();
        let ws = module_word_series(&m, top).unwrap();
        // clk(1) || a(4) || b(4) with clk high at the sample
        assert_eq!(ws.width, 9);
        assert_eq!(ws.bitvec(0), BitVec::from_u64(0b1_1010_0110, 9));
        assert!(matches!(module_word_series(&m, &d.hierarchy), Err(IngestError::EmptyModule(_))));
    }
}
