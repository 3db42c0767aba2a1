//! Plain-text artifact formats: hex block files, oracle CSV, power-trace CSV,
//! class-labelled samples and Feistel golden vectors.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::Block;
use crate::metrics::OracleTrace;
use crate::obfuscation::RoundKeys;
use crate::BitVec;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses 32 hex digits (optional `0x` prefix) into a block.
pub fn parse_block(text: &str) -> Result<Block, String> {
    let t = text.trim();
    let t = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")).unwrap_or(t);
    if t.len() != 32 {
        return Err(format!("expected 32 hex digits, got {}", t.len()));
    }
    let v = hex::decode(t).map_err(|e| format!("bad hex: {e}"))?;
    Ok(v.try_into().expect("16 bytes"))
}

pub fn block_hex(b: &Block) -> String {
    hex::encode(b)
}

/// One block per line; blank lines and `#` comments are skipped.
pub fn parse_blocks(text: &str) -> Result<Vec<Block>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_block(l).map_err(|message| FormatError::Line { line: i + 1, message }))
        .collect()
}

pub fn blocks_to_string(blocks: &[Block]) -> String {
    blocks.iter().map(|b| block_hex(b) + "\n").collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct OracleRow {
    run_index: usize,
    point_label: String,
    value_hex: String,
}

/// Columns `run_index,point_label,value_hex`; values are written with the
/// oracle's width in hex digits.
pub fn write_oracle_csv(oracle: &OracleTrace, out: impl Write) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    let digits = oracle.width().div_ceil(4).max(1) as usize;
    for (i, v) in oracle.values.iter().enumerate() {
        let mut hex = String::new();
        for word in v.words().iter().rev() {
            hex.push_str(&format!("{word:016x}"));
        }
        let hex = &hex[hex.len() - digits.min(hex.len())..];
        w.serialize(OracleRow { run_index: i, point_label: oracle.label.clone(), value_hex: hex.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

fn parse_hex_bits(text: &str) -> Option<BitVec> {
    let t = text.trim();
    let t = t.strip_prefix("0x").unwrap_or(t);
    if t.is_empty() || !t.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let width = 4 * t.len() as u32;
    let mut words = vec![0u64; width.div_ceil(64) as usize];
    for (i, c) in t.chars().rev().enumerate() {
        let d = c.to_digit(16).expect("hex digit") as u64;
        words[i / 16] |= d << (4 * (i % 16));
    }
    Some(BitVec::from_words(&words, width))
}

/// Rows must be in run order starting at 0 and share one label and width.
pub fn read_oracle_csv(input: impl Read) -> Result<OracleTrace, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::new();
    let mut label: Option<String> = None;
    for (i, row) in r.deserialize::<OracleRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| FormatError::Row { row: row_no, message: e.to_string() })?;
        if row.run_index != i {
            return Err(FormatError::Row { row: row_no, message: format!("run_index {} out of order", row.run_index) });
        }
        match &label {
            None => label = Some(row.point_label.clone()),
            Some(l) if *l != row.point_label => {
                return Err(FormatError::Row { row: row_no, message: format!("label {:?} differs from {l:?}", row.point_label) })
            }
            _ => {}
        }
        let v = parse_hex_bits(&row.value_hex)
            .ok_or_else(|| FormatError::Row { row: row_no, message: format!("bad value_hex {:?}", row.value_hex) })?;
        if let Some(first) = values.first().map(|f: &BitVec| f.width()) {
            if first != v.width() {
                return Err(FormatError::Row { row: row_no, message: format!("width {} differs from {first}", v.width()) });
            }
        }
        values.push(v);
    }
    OracleTrace::try_new(values, label.unwrap_or_default()).map_err(|e| FormatError::Invalid(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    run_index: usize,
    cycle: usize,
    sample: f64,
}

/// Long format `run_index,cycle,sample`.
pub fn write_traces_csv<T: AsRef<[f64]>>(traces: &[T], out: impl Write) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    for (run, t) in traces.iter().enumerate() {
        for (cycle, sample) in t.as_ref().iter().enumerate() {
            w.serialize(TraceRow { run_index: run, cycle, sample: *sample })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the long format back. Runs and cycles must be contiguous from 0 and
/// every run must have the same length; errors name the data row (1-based,
/// header excluded).
pub fn read_traces_csv(input: impl Read) -> Result<Vec<Vec<f64>>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let mut traces: Vec<Vec<f64>> = Vec::new();
    for (i, row) in r.deserialize::<TraceRow>().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| FormatError::Row { row: row_no, message: e.to_string() })?;
        if !row.sample.is_finite() {
            return Err(FormatError::Row { row: row_no, message: "sample is not finite".into() });
        }
        if row.run_index == traces.len() && row.cycle == 0 {
            traces.push(Vec::new());
        }
        let n = traces.len();
        let Some(t) = traces.last_mut().filter(|_| row.run_index + 1 == n) else {
            return Err(FormatError::Row { row: row_no, message: format!("run_index {} out of order", row.run_index) });
        };
        if row.cycle != t.len() {
            return Err(FormatError::Row { row: row_no, message: format!("cycle {} out of order", row.cycle) });
        }
        t.push(row.sample);
    }
    if let Some(first) = traces.first() {
        if let Some(bad) = traces.iter().position(|t| t.len() != first.len()) {
            return Err(FormatError::Invalid(format!(
                "run {bad} has {} samples, run 0 has {}",
                traces[bad].len(),
                first.len()
            )));
        }
    }
    Ok(traces)
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassRow {
    class: String,
    sample: f64,
}

/// Columns `class,sample`; classes keep first-appearance order.
pub fn read_class_samples(input: impl Read) -> Result<Vec<(String, Vec<f64>)>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, row) in r.deserialize::<ClassRow>().enumerate() {
        let row = row.map_err(|e| FormatError::Row { row: i + 1, message: e.to_string() })?;
        match groups.iter_mut().find(|(c, _)| *c == row.class) {
            Some((_, v)) => v.push(row.sample),
            None => groups.push((row.class, vec![row.sample])),
        }
    }
    Ok(groups)
}

pub fn write_class_samples(groups: &[(String, Vec<f64>)], out: impl Write) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    for (class, samples) in groups {
        for s in samples {
            w.serialize(ClassRow { class: class.clone(), sample: *s })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of the Feistel golden-vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldenVector {
    pub x: u32,
    pub keys: RoundKeys,
    pub expected: u32,
}

#[derive(Debug, Deserialize)]
struct GoldenRow {
    x: String,
    k1: String,
    k2: String,
    k3: String,
    k4: String,
    expected: String,
}

fn hex_u32(s: &str) -> Option<u32> {
    u32::from_str_radix(s.trim().trim_start_matches("0x"), 16).ok()
}

/// Columns `x,k1,k2,k3,k4,expected`, all hex.
pub fn read_golden_csv(input: impl Read) -> Result<Vec<GoldenVector>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<GoldenRow>()
        .enumerate()
        .map(|(i, row)| {
            let bad = |message: String| FormatError::Row { row: i + 1, message };
            let row = row.map_err(|e| bad(e.to_string()))?;
            let field = |s: &str| hex_u32(s).ok_or_else(|| bad(format!("bad hex {s:?}")));
            let key = |s: &str| field(s).and_then(|v| u16::try_from(v).map_err(|_| bad(format!("key {s:?} exceeds 16 bits"))));
            Ok(GoldenVector {
                x: field(&row.x)?,
                keys: RoundKeys::new([key(&row.k1)?, key(&row.k2)?, key(&row.k3)?, key(&row.k4)?]),
                expected: field(&row.expected)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_round_trip() {
        let blocks = vec![[0u8; 16], core::array::from_fn(|i| i as u8 * 17)];
        let text = blocks_to_string(&blocks);
        assert_eq!(parse_blocks(&format!("# pts\n{text}\n")).unwrap(), blocks);
        let err = parse_blocks("00112233445566778899aabbccddeeff\nzz\n").unwrap_err();
        assert!(matches!(err, FormatError::Line { line: 2, .. }));
    }

    #[test]
    fn traces_round_trip_and_row_errors() {
        let traces = vec![vec![1.0, 2.5], vec![-3.0, 4.0]];
        let mut buf = Vec::new();
        write_traces_csv(&traces, &mut buf).unwrap();
        assert!(buf.starts_with(b"run_index,cycle,sample\n0,0,1.0\n"));
        assert_eq!(read_traces_csv(buf.as_slice()).unwrap(), traces);

        let bad = "run_index,cycle,sample\n0,0,1\n0,1,x\n";
        assert!(matches!(read_traces_csv(bad.as_bytes()), Err(FormatError::Row { row: 2, .. })));
        let gap = "run_index,cycle,sample\n0,0,1\n0,2,1\n";
        assert!(matches!(read_traces_csv(gap.as_bytes()), Err(FormatError::Row { row: 2, .. })));
        let ragged = "run_index,cycle,sample\n0,0,1\n0,1,1\n1,0,1\n";
        assert!(matches!(read_traces_csv(ragged.as_bytes()), Err(FormatError::Invalid(_))));
    }

    #[test]
    fn oracle_round_trip() {
        let o = OracleTrace::from_bytes(&[0x00, 0xA5, 0xFF], "sbox_out[0]");
        let mut buf = Vec::new();
        write_oracle_csv(&o, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text, "run_index,point_label,value_hex\n0,sbox_out[0],00\n1,sbox_out[0],a5\n2,sbox_out[0],ff\n");
        assert_eq!(read_oracle_csv(buf.as_slice()).unwrap(), o);
        let mixed = "run_index,point_label,value_hex\n0,a,00\n1,b,01\n";
        assert!(matches!(read_oracle_csv(mixed.as_bytes()), Err(FormatError::Row { row: 2, .. })));
    }

    #[test]
    fn class_samples_keep_order() {
        let text = "class,sample\nb,1\na,2\nb,3\n";
        let g = read_class_samples(text.as_bytes()).unwrap();
        assert_eq!(g, vec![("b".to_string(), vec![1.0, 3.0]), ("a".to_string(), vec![2.0])]);
    }
}
