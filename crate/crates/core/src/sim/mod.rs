//! Toy in-order core with a data cache running table-based AES-128, in a
//! baseline configuration and a configuration with an obfuscated datapath.

mod batch;
mod config;
mod log;
mod machine;
mod power;
mod program;
mod vcd;

use thiserror::Error;

use crate::obfuscation::ObfuscationError;

pub use batch::{
    epoch_keys, epoch_of, for_each_run, lfsr_for, noise_seed, run_batch, run_logs, run_workload, AesWorkload,
    BatchOptions, BatchOutput, RunOutput,
};
pub use config::{CacheGeometry, Mode, SimConfig, DEFAULT_NOISE_SIGMA, DEFAULT_REKEY_INTERVAL};
pub use log::{CycleLog, Encoding, LogLayout, SignalSpec, PRF_ENTRIES};
pub use machine::{program_cycles, schedule, AccessKind, AccessResult, CycleSink, STATUS_RESET, InstrTiming, Machine};
pub use power::{synth_power, PowerSink, PowerTrace};
pub use program::{aes_memory_image, aes_program, shift_rows_dest, AesLayout, AluOp, MicroOp, Operand, Reg};
pub use vcd::{emit_vcd, run_set_from_logs, CLOCK_NAME, CYCLE_TICKS, TOP_SCOPE};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("rekey requested on a baseline machine")]
    RekeyInBaseline,
    #[error("address {addr:#x} does not fit in {width} bits")]
    AddressOutOfRange { addr: u64, width: u32 },
    #[error(transparent)]
    Obfuscation(#[from] ObfuscationError),
}
