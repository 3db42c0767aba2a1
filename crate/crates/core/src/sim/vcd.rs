//! Value change dump of a cycle log.

use std::fmt::Write;

use crate::bits::words_for;

use crate::ingest::{parse_vcd, Alignment, IngestError, RunSet};

use super::CycleLog;

/// Scope holding the clock; the layout's modules sit below it.
pub const TOP_SCOPE: &str = "soc";
pub const CLOCK_NAME: &str = "clk";
/// Ticks per cycle; rising edge of cycle `c` at `10c + 5`.
pub const CYCLE_TICKS: u64 = 10;

fn id_code(mut n: usize) -> String {
    // Printable ASCII 33..=126, little-endian base 94.
    let mut s = String::new();
    loop {
        s.push((33 + (n % 94) as u8) as char);
        n /= 94;
        if n == 0 {
            break s;
        }
    }
}

fn binary(words: &[u64], width: u32) -> String {
    let mut s = String::with_capacity(width as usize);
    for b in (0..width).rev() {
        let bit = words[(b / 64) as usize] >> (b % 64) & 1;
        s.push(if bit == 1 { '1' } else { '0' });
    }
    s
}

fn emit_value(out: &mut String, words: &[u64], width: u32, id: &str) {
    if width == 1 {
        let _ = writeln!(out, "{}{id}", words[0] & 1);
    } else {
        let _ = writeln!(out, "b{} {id}", binary(words, width));
    }
}

/// Header, reset values at time 0, then per cycle one change per changed
/// signal at the rising edge. An empty log yields only the header.
pub fn emit_vcd(log: &CycleLog) -> Vec<u8> {
    let layout = &log.layout;
    let mut out = String::new();
    out.push_str("$timescale 1ns $end\n");
    let _ = writeln!(out, "$scope module {TOP_SCOPE} $end");
    let clk_id = id_code(0);
    let _ = writeln!(out, "$var wire 1 {clk_id} {CLOCK_NAME} $end");

    // Nested scopes in first-appearance order, signals grouped per module.
    let mut open: Vec<&str> = Vec::new();
    for m in layout.modules() {
        let common = open.iter().zip(&m).take_while(|(a, b)| a == b).count();
        for _ in common..open.len() {
            out.push_str("$upscope $end\n");
        }
        open.truncate(common);
        for part in &m[common..] {
            let _ = writeln!(out, "$scope module {part} $end");
            open.push(part);
        }
        for (i, s) in layout.signals.iter().enumerate().filter(|(_, s)| s.module == m) {
            let kind = if s.width == 1 { "wire" } else { "reg" };
            let _ = writeln!(out, "$var {kind} {} {} {} $end", s.width, id_code(i + 1), s.name);
        }
    }
    for _ in &open {
        out.push_str("$upscope $end\n");
    }
    out.push_str("$upscope $end\n$enddefinitions $end\n");

    if log.cycles() == 0 {
        return out.into_bytes();
    }
    let words_of = |i: usize| words_for(layout.signals[i].width);
    out.push_str("#0\n$dumpvars\n0");
    out.push_str(&clk_id);
    out.push('\n');
    for (i, s) in layout.signals.iter().enumerate() {
        emit_value(&mut out, &vec![0; words_of(i)], s.width, &id_code(i + 1));
    }
    out.push_str("$end\n");

    let zero = vec![0u64; layout.words_per_cycle()];
    for c in 0..log.cycles() {
        let prev = if c == 0 { &zero[..] } else { log.row(c - 1) };
        let cur = log.row(c);
        let _ = writeln!(out, "#{}", CYCLE_TICKS * c as u64 + 5);
        out.push('1');
        out.push_str(&clk_id);
        out.push('\n');
        for (i, s) in layout.signals.iter().enumerate() {
            let o = layout.offset(i);
            let n = words_of(i);
            if cur[o..o + n] != prev[o..o + n] {
                emit_value(&mut out, &cur[o..o + n], s.width, &id_code(i + 1));
            }
        }
        let _ = writeln!(out, "#{}\n0{clk_id}", CYCLE_TICKS * (c as u64 + 1));
    }
    out.into_bytes()
}

/// Runs as the analysis side sees them: each log is written out as VCD,
/// parsed back and resampled on the clock.
pub fn run_set_from_logs(logs: &[CycleLog]) -> Result<RunSet, IngestError> {
    let dumps = logs.iter().map(|l| parse_vcd(&emit_vcd(l))).collect::<Result<Vec<_>, _>>()?;
    RunSet::from_dumps(&dumps, CLOCK_NAME, Alignment::ErrorOnMismatch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_codes_are_distinct_and_printable() {
        let ids: std::collections::HashSet<String> = (0..10_000).map(id_code).collect();
        assert_eq!(ids.len(), 10_000);
        assert!(ids.iter().all(|s| s.bytes().all(|b| (33..=126).contains(&b))));
    }
}
