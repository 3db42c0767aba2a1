//! Table-based AES-128 (encryption only) and first-round intermediate values.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::metrics::{BitVec, OracleTrace};

#[rustfmt::skip]
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

pub type Block = [u8; 16];

#[inline]
pub fn sbox(x: u8) -> u8 {
    SBOX[x as usize]
}

/// Multiplication by 2 in GF(2^8) modulo x^8 + x^4 + x^3 + x + 1.
#[inline]
pub fn xtime(x: u8) -> u8 {
    let reduce = if x & 0x80 != 0 { 0x1b } else { 0 };
    (x << 1) ^ reduce
}

/// Expanded key schedule: 11 round keys of 16 bytes, FIPS-197 byte order.
pub fn expand_key(key: &Block) -> [Block; 11] {
    let mut w = [[0u8; 4]; 44];
    for (i, word) in w.iter_mut().take(4).enumerate() {
        word.copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    for i in 4..44 {
        let mut temp = w[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            for b in temp.iter_mut() {
                *b = sbox(*b);
            }
            temp[0] ^= RCON[i / 4 - 1];
        }
        for j in 0..4 {
            w[i][j] = w[i - 4][j] ^ temp[j];
        }
    }
    let mut round_keys = [[0u8; 16]; 11];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    round_keys
}

/// State bytes are column-major: byte `4c + r` is row `r` of column `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AesState {
    pub bytes: Block,
    pub round_keys: [Block; 11],
}

impl AesState {
    pub fn new(plaintext: &Block, key: &Block) -> Self {
        Self { bytes: *plaintext, round_keys: expand_key(key) }
    }

    fn add_round_key(&mut self, round: usize) {
        for (b, k) in self.bytes.iter_mut().zip(self.round_keys[round].iter()) {
            *b ^= k;
        }
    }

    fn sub_bytes(&mut self) {
        for b in self.bytes.iter_mut() {
            *b = sbox(*b);
        }
    }

    fn shift_rows(&mut self) {
        let old = self.bytes;
        for c in 0..4 {
            for r in 0..4 {
                self.bytes[4 * c + r] = old[4 * ((c + r) % 4) + r];
            }
        }
    }

    fn mix_columns(&mut self) {
        for c in 0..4 {
            let col = [self.bytes[4 * c], self.bytes[4 * c + 1], self.bytes[4 * c + 2], self.bytes[4 * c + 3]];
            for r in 0..4 {
                let a0 = col[r];
                let a1 = col[(r + 1) % 4];
                self.bytes[4 * c + r] = xtime(a0) ^ xtime(a1) ^ a1 ^ col[(r + 2) % 4] ^ col[(r + 3) % 4];
            }
        }
    }

    pub fn encrypt(mut self) -> Block {
        self.add_round_key(0);
        for round in 1..10 {
            self.sub_bytes();
            self.shift_rows();
            self.mix_columns();
            self.add_round_key(round);
        }
        self.sub_bytes();
        self.shift_rows();
        self.add_round_key(10);
        self.bytes
    }
}

pub fn aes128_encrypt(plaintext: &Block, key: &Block) -> Block {
    AesState::new(plaintext, key).encrypt()
}

/// First-round intermediate values an attacker would like to observe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    XorKey,
    SboxOut,
    SboxOutTimes2,
}

impl PointKind {
    pub const ALL: [PointKind; 3] = [PointKind::XorKey, PointKind::SboxOut, PointKind::SboxOutTimes2];

    pub fn label(&self) -> &'static str {
        match self {
            PointKind::XorKey => "xor_key",
            PointKind::SboxOut => "sbox_out",
            PointKind::SboxOutTimes2 => "sbox_out_times2",
        }
    }
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PointKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PointKind::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| format!("unknown interesting point {s:?} (expected xor_key, sbox_out or sbox_out_times2)"))
    }
}

pub fn first_round_value(p: u8, k: u8, point: PointKind) -> u8 {
    match point {
        PointKind::XorKey => p ^ k,
        PointKind::SboxOut => sbox(p ^ k),
        PointKind::SboxOutTimes2 => xtime(sbox(p ^ k)),
    }
}

/// User-supplied first-round function of `(plaintext byte, key byte)`.
pub type PointFn = Arc<dyn Fn(u8, u8) -> u8 + Send + Sync>;

#[derive(Clone)]
pub enum PointFunction {
    Builtin(PointKind),
    Custom { label: String, f: PointFn },
}

impl PointFunction {
    pub fn custom(label: impl Into<String>, f: impl Fn(u8, u8) -> u8 + Send + Sync + 'static) -> Self {
        PointFunction::Custom { label: label.into(), f: Arc::new(f) }
    }

    pub fn label(&self) -> &str {
        match self {
            PointFunction::Builtin(kind) => kind.label(),
            PointFunction::Custom { label, .. } => label,
        }
    }

    pub fn eval(&self, p: u8, k: u8) -> u8 {
        match self {
            PointFunction::Builtin(kind) => first_round_value(p, k, *kind),
            PointFunction::Custom { f, .. } => f(p, k),
        }
    }
}

impl fmt::Debug for PointFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PointFunction").field(&self.label()).finish()
    }
}

impl From<PointKind> for PointFunction {
    fn from(kind: PointKind) -> Self {
        PointFunction::Builtin(kind)
    }
}

#[derive(Debug, Clone)]
pub struct InterestingPoint {
    pub function: PointFunction,
    byte_index: usize,
}

impl InterestingPoint {
    pub fn new(function: impl Into<PointFunction>, byte_index: usize) -> Option<Self> {
        (byte_index < 16).then(|| Self { function: function.into(), byte_index })
    }

    pub fn byte_index(&self) -> usize {
        self.byte_index
    }

    /// Label of the form `sbox_out_byte0`.
    pub fn label(&self) -> String {
        format!("{}_byte{}", self.function.label(), self.byte_index)
    }

    pub fn value(&self, plaintext: &Block, key: &Block) -> u8 {
        self.function.eval(plaintext[self.byte_index], key[self.byte_index])
    }
}

pub fn gen_oracle(plaintexts: &[Block], key: &Block, point: &InterestingPoint) -> OracleTrace {
    let values = plaintexts
        .iter()
        .map(|p| BitVec::from_u64(point.value(p, key) as u64, 8))
        .collect();
    OracleTrace::new(values, point.label())
}
