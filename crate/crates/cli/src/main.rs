mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leakprobe::aes::PointKind;
use leakprobe::sim::Mode;

#[derive(Debug, Parser)]
#[command(name = "leakprobe", version, about = "Power side-channel leakage analysis for simulated and recorded designs")]
pub struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config mirroring the simulator settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "leakprobe-out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the AES workload on the pipeline model and record power traces.
    Simulate(SimulateArgs),
    /// Rank modules of a VCD run set by SVF against oracle traces.
    Analyze(AnalyzeArgs),
    /// First-order CPA on one key byte.
    Dpa(DpaArgs),
    /// Pairwise Welch t-tests between classes of samples.
    Ttest(TtestArgs),
    /// Obfuscate or recover one 32-bit word.
    Obfuscate(ObfuscateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plaintexts, one 32-digit hex block per line.
    #[arg(long, required_unless_present = "replay")]
    pub plaintexts: Option<PathBuf>,
    /// AES-128 key as 32 hex digits.
    #[arg(long, required_unless_present = "replay")]
    pub key: Option<String>,
    /// Overrides the mode from the config file.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Keep only cycles START:END of each trace.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(usize, usize)>,
    /// Stop each run at the end of the window.
    #[arg(long, requires = "window")]
    pub stop_at_window_end: bool,
    /// Count toggles of this module subtree only, e.g. `dcache`.
    #[arg(long)]
    pub power_module: Option<String>,
    /// Also write one VCD per run.
    #[arg(long)]
    pub vcd: bool,
    /// Limit VCDs to the first N cycles.
    #[arg(long, requires = "vcd")]
    pub vcd_cycles: Option<usize>,
    /// Write an oracle CSV for this interesting point (repeatable).
    #[arg(long = "oracle")]
    pub oracles: Vec<PointKind>,
    /// State byte for the oracles.
    #[arg(long, default_value_t = 0)]
    pub oracle_byte: usize,
    /// Regenerate the batch described by an earlier manifest.
    #[arg(long, conflicts_with_all = ["plaintexts", "key", "mode", "window", "power_module", "vcd", "oracles"])]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// File listing one VCD path per line.
    #[arg(long)]
    pub vcds: PathBuf,
    /// Oracle CSV (run_index,point_label,value_hex); repeatable.
    #[arg(long = "oracle", required = true)]
    pub oracles: Vec<PathBuf>,
    /// Clock signal name.
    #[arg(long, default_value = "clk")]
    pub clock: String,
    /// Score cycles START:END only (0-based, end exclusive).
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(usize, usize)>,
    /// Oracle permutations for the noise floor; 0 skips it.
    #[arg(long, default_value_t = 1000)]
    pub shuffles: usize,
    /// Truncate runs to the shortest instead of failing on a length mismatch.
    #[arg(long)]
    pub truncate: bool,
    #[arg(long, default_value_t = 0.5)]
    pub red_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub red_factor: f64,
    #[arg(long, default_value_t = 2.0)]
    pub orange_factor: f64,
}

#[derive(Debug, Args)]
pub struct DpaArgs {
    /// Power traces CSV (run_index,cycle,sample).
    #[arg(long)]
    pub traces: PathBuf,
    /// Plaintexts, one hex block per line, in run order.
    #[arg(long)]
    pub plaintexts: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub target_byte: usize,
    #[arg(long, default_value = "sbox_out")]
    pub point: PointKind,
    /// Traces between rank checkpoints.
    #[arg(long, default_value_t = 250)]
    pub checkpoint: usize,
    /// Full AES key (32 hex digits); enables disclosure tracking.
    #[arg(long)]
    pub true_key: Option<String>,
    /// Attack samples START:END only.
    #[arg(long, value_parser = parse_window)]
    pub window: Option<(usize, usize)>,
    /// Keep the full guess x sample correlation matrix in the JSON.
    #[arg(long)]
    pub full_correlations: bool,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    /// CSV with columns class,sample.
    #[arg(long)]
    pub classes: PathBuf,
}

#[derive(Debug, Args)]
pub struct ObfuscateArgs {
    /// 32-bit value in hex.
    pub value: String,
    /// Four 16-bit round keys: `k1,k2,k3,k4` or 16 hex digits.
    #[arg(long)]
    pub keys: String,
    /// Recover the plain value instead.
    #[arg(long)]
    pub inverse: bool,
    /// Affine round-function JSON overriding the default.
    #[arg(long)]
    pub affine_spec: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad window start {a:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad window end {b:?}"))?;
    if b <= a {
        return Err(format!("window end {b} must exceed start {a}"));
    }
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
