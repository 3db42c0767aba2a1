//! Straight-line micro-op programs and the table-based AES-128 schedule.

use crate::aes::Block;

/// Register index, `0..32`; register 0 reads as zero and ignores writes.
pub type Reg = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Xor,
    And,
    Or,
    Shl,
    Shr,
}

impl AluOp {
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Xor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Shl => a << (b & 63),
            AluOp::Shr => a >> (b & 63),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroOp {
    Alu { op: AluOp, rd: Reg, rs1: Reg, src2: Operand },
    /// Zero-extended byte load from `rs1 + offset`.
    LoadByte { rd: Reg, rs1: Reg, offset: u64 },
    /// Byte store of `rs2` to `rs1 + offset`.
    StoreByte { rs2: Reg, rs1: Reg, offset: u64 },
}

impl MicroOp {
    pub fn dest(&self) -> Option<Reg> {
        match self {
            MicroOp::Alu { rd, .. } | MicroOp::LoadByte { rd, .. } => (*rd != 0).then_some(*rd),
            MicroOp::StoreByte { .. } => None,
        }
    }

    pub fn sources(&self) -> [Option<Reg>; 2] {
        match *self {
            MicroOp::Alu { rs1, src2: Operand::Reg(r), .. } => [Some(rs1), Some(r)],
            MicroOp::Alu { rs1, .. } | MicroOp::LoadByte { rs1, .. } => [Some(rs1), None],
            MicroOp::StoreByte { rs1, rs2, .. } => [Some(rs1), Some(rs2)],
        }
    }

    pub fn is_load(&self) -> bool {
        matches!(self, MicroOp::LoadByte { .. })
    }
}

/// Where the AES program keeps its data. Every region is line aligned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AesLayout {
    pub sbox: u64,
    /// 256-byte table of `xtime(b)`, used by MixColumns.
    pub xtime: u64,
    pub round_keys: u64,
    pub state: u64,
    pub scratch: u64,
}

impl Default for AesLayout {
    fn default() -> Self {
        Self { sbox: 0x2F00, xtime: 0x2E00, round_keys: 0x3000, state: 0x3100, scratch: 0x3140 }
    }
}

const R_SBOX: Reg = 1;
const R_STATE: Reg = 2;
const R_KEYS: Reg = 3;
const R_SCRATCH: Reg = 4;
const R_XTIME: Reg = 20;

fn alu(op: AluOp, rd: Reg, rs1: Reg, rs2: Reg) -> MicroOp {
    MicroOp::Alu { op, rd, rs1, src2: Operand::Reg(rs2) }
}

fn alui(op: AluOp, rd: Reg, rs1: Reg, imm: u64) -> MicroOp {
    MicroOp::Alu { op, rd, rs1, src2: Operand::Imm(imm) }
}

fn lb(rd: Reg, rs1: Reg, offset: u64) -> MicroOp {
    MicroOp::LoadByte { rd, rs1, offset }
}

fn sb(rs2: Reg, rs1: Reg, offset: u64) -> MicroOp {
    MicroOp::StoreByte { rs2, rs1, offset }
}

/// Position of state byte `i` (column-major) after ShiftRows.
pub fn shift_rows_dest(i: usize) -> usize {
    let (row, col) = (i % 4, i / 4);
    row + 4 * ((col + 4 - row) % 4)
}

/// AES-128 over the state block at `layout.state`, using the expanded key at
/// `layout.round_keys` and the 256-byte S-box at `layout.sbox`. The
/// ciphertext is left in the state block.
pub fn aes_program(layout: &AesLayout) -> Vec<MicroOp> {
    let mut p = vec![
        alui(AluOp::Add, R_SBOX, 0, layout.sbox),
        alui(AluOp::Add, R_STATE, 0, layout.state),
        alui(AluOp::Add, R_KEYS, 0, layout.round_keys),
        alui(AluOp::Add, R_SCRATCH, 0, layout.scratch),
        alui(AluOp::Add, R_XTIME, 0, layout.xtime),
    ];
    for round in 1..=10u64 {
        // AddRoundKey(round - 1), SubBytes and ShiftRows into scratch.
        for i in 0..16u64 {
            p.extend([
                lb(5, R_STATE, i),
                lb(6, R_KEYS, (round - 1) * 16 + i),
                alu(AluOp::Xor, 7, 5, 6),
                alu(AluOp::Add, 8, R_SBOX, 7),
                lb(9, 8, 0),
                sb(9, R_SCRATCH, shift_rows_dest(i as usize) as u64),
            ]);
        }
        if round < 10 {
            for col in 0..4u64 {
                mix_column(&mut p, col);
            }
        } else {
            for i in 0..16u64 {
                p.extend([
                    lb(5, R_SCRATCH, i),
                    lb(6, R_KEYS, 160 + i),
                    alu(AluOp::Xor, 7, 5, 6),
                    sb(7, R_STATE, i),
                ]);
            }
        }
    }
    p
}

/// Scratch column -> state column, with `xtime` by table lookup.
fn mix_column(p: &mut Vec<MicroOp>, col: u64) {
    let a: [Reg; 4] = [10, 11, 12, 13];
    let t: [Reg; 4] = [14, 15, 16, 17];
    for r in 0..4 {
        p.push(lb(a[r], R_SCRATCH, 4 * col + r as u64));
    }
    for r in 0..4 {
        p.extend([alu(AluOp::Add, 18, R_XTIME, a[r]), lb(t[r], 18, 0)]);
    }
    for r in 0..4 {
        let (n1, n2, n3) = ((r + 1) % 4, (r + 2) % 4, (r + 3) % 4);
        p.extend([
            alu(AluOp::Xor, 19, t[r], t[n1]),
            alu(AluOp::Xor, 19, 19, a[n1]),
            alu(AluOp::Xor, 19, 19, a[n2]),
            alu(AluOp::Xor, 19, 19, a[n3]),
            sb(19, R_STATE, 4 * col + r as u64),
        ]);
    }
}

/// Initial memory image: S-box, `xtime` table, expanded key and plaintext.
pub fn aes_memory_image(layout: &AesLayout, plaintext: &Block, key: &Block) -> Vec<(u64, Vec<u8>)> {
    let round_keys: Vec<u8> = crate::aes::expand_key(key).iter().flatten().copied().collect();
    vec![
        (layout.sbox, crate::aes::SBOX.to_vec()),
        (layout.xtime, (0..=255u8).map(crate::aes::xtime).collect()),
        (layout.round_keys, round_keys),
        (layout.state, plaintext.to_vec()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Interprets a program on a flat byte memory.
    fn interpret(prog: &[MicroOp], mem: &mut [u8]) {
        let mut regs = [0u64; 32];
        for op in prog {
            match *op {
                MicroOp::Alu { op, rd, rs1, src2 } => {
                    let b = match src2 {
                        Operand::Reg(r) => regs[r as usize],
                        Operand::Imm(v) => v,
                    };
                    let v = op.apply(regs[rs1 as usize], b);
                    if rd != 0 {
                        regs[rd as usize] = v;
                    }
                }
                MicroOp::LoadByte { rd, rs1, offset } => {
                    let v = mem[(regs[rs1 as usize] + offset) as usize] as u64;
                    if rd != 0 {
                        regs[rd as usize] = v;
                    }
                }
                MicroOp::StoreByte { rs2, rs1, offset } => {
                    mem[(regs[rs1 as usize] + offset) as usize] = regs[rs2 as usize] as u8;
                }
            }
        }
    }

    #[test]
    fn program_computes_aes() {
        let layout = AesLayout::default();
        let key: Block = core::array::from_fn(|i| i as u8);
        let pt: Block = core::array::from_fn(|i| (i as u8) * 0x11);
        let mut mem = vec![0u8; 0x4000];
        for (addr, bytes) in aes_memory_image(&layout, &pt, &key) {
            mem[addr as usize..addr as usize + bytes.len()].copy_from_slice(&bytes);
        }
        interpret(&aes_program(&layout), &mut mem);
        let s = layout.state as usize;
        assert_eq!(&mem[s..s + 16], &crate::aes::aes128_encrypt(&pt, &key));
    }

    #[test]
    fn shift_rows_positions() {
        let dest: Vec<usize> = (0..16).map(shift_rows_dest).collect();
        assert_eq!(dest, vec![0, 13, 10, 7, 4, 1, 14, 11, 8, 5, 2, 15, 12, 9, 6, 3]);
    }
}
