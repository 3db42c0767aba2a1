//! Ranked leakage reports and batch manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aes::PointKind;
use crate::dpa::{AttackResult, MtdCurve};
use crate::metrics::SvfReport;
use crate::sim::{epoch_keys, epoch_of, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Red,
    Orange,
    Blue,
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Severity::Red => "red",
            Severity::Orange => "orange",
            Severity::Blue => "blue",
        })
    }
}

/// Red if `svf >= max(red_min, red_factor * floor)`, orange if
/// `svf >= orange_factor * floor`, blue otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub red_min: f64,
    pub red_factor: f64,
    pub orange_factor: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self { red_min: 0.5, red_factor: 3.0, orange_factor: 2.0 }
    }
}

impl SeverityThresholds {
    /// A missing floor counts as 0. A zero SVF is always blue.
    pub fn classify(&self, svf: f64, noise_floor: Option<f64>) -> Severity {
        let floor = noise_floor.unwrap_or(0.0);
        if svf <= 0.0 {
            Severity::Blue
        } else if svf >= self.red_min.max(self.red_factor * floor) {
            Severity::Red
        } else if svf >= self.orange_factor * floor {
            Severity::Orange
        } else {
            Severity::Blue
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub module_path: String,
    pub oracle: String,
    pub svf: f64,
    pub peak_cycle: usize,
    pub noise_floor: Option<f64>,
    pub xz_ratio: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub thresholds: SeverityThresholds,
    /// Descending by SVF.
    pub modules: Vec<LeakageEntry>,
}

impl LeakageReport {
    pub fn from_svf(report: &SvfReport, thresholds: SeverityThresholds) -> Self {
        let mut modules: Vec<LeakageEntry> = report
            .entries
            .iter()
            .map(|e| LeakageEntry {
                module_path: e.path_string(),
                oracle: e.oracle.clone(),
                svf: e.svf,
                peak_cycle: e.peak_cycle,
                noise_floor: e.noise_floor,
                xz_ratio: e.xz_ratio,
                severity: thresholds.classify(e.svf, e.noise_floor),
            })
            .collect();
        modules.sort_by(|a, b| b.svf.total_cmp(&a.svf).then_with(|| a.module_path.cmp(&b.module_path)));
        Self { thresholds, modules }
    }

    pub fn get(&self, module_path: &str) -> Option<&LeakageEntry> {
        self.modules.iter().find(|e| e.module_path == module_path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Fixed-width ranked table for terminals.
    pub fn to_table(&self) -> String {
        let width = self.modules.iter().map(|e| e.module_path.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>6}  {:>6}  {:>5}  {:<6}  oracle", "rank", "module", "svf", "floor", "peak", "level");
        for (i, e) in self.modules.iter().enumerate() {
            let floor = e.noise_floor.map_or("-".to_string(), |f| format!("{f:.3}"));
            let _ = writeln!(
                out,
                "{:>4}  {:<width$}  {:>6.3}  {:>6}  {:>5}  {:<6}  {}",
                i + 1,
                e.module_path,
                e.svf,
                floor,
                e.peak_cycle,
                e.severity,
                e.oracle
            );
        }
        out
    }
}

/// Contiguous runs sharing one set of obfuscation keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSpan {
    pub epoch: u64,
    pub first_run: u64,
    pub last_run: u64,
    pub keys_hex: [String; 4],
}

/// Key epochs covering `runs` runs of a param-mode batch; empty in baseline.
pub fn epoch_spans(cfg: &SimConfig, runs: u64) -> Vec<EpochSpan> {
    if !cfg.is_param() || runs == 0 {
        return Vec::new();
    }
    let count = epoch_of(cfg, runs - 1) + 1;
    epoch_keys(cfg, count)
        .into_iter()
        .map(|k| {
            let first = match cfg.rekey_interval_runs {
                Some(n) => k.epoch * n,
                None => 0,
            };
            let last = match cfg.rekey_interval_runs {
                Some(n) => (first + n - 1).min(runs - 1),
                None => runs - 1,
            };
            EpochSpan {
                epoch: k.epoch,
                first_run: first,
                last_run: last,
                keys_hex: k.keys.map(|v| format!("{v:04x}")),
            }
        })
        .collect()
}

/// First-round intermediate on one state byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSpec {
    pub point: PointKind,
    pub byte: usize,
}

/// Everything needed to regenerate a simulated batch bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: SimConfig,
    /// Affine round-function spec in its JSON file form.
    pub affine: serde_json::Value,
    pub key_hex: String,
    pub plaintext_file: String,
    pub plaintext_count: usize,
    /// Kept cycles `[start, end)`, if windowed.
    pub window: Option<(usize, usize)>,
    /// Runs stopped at the end of the window (no ciphertexts then).
    pub stop_at_window_end: bool,
    /// Power counts toggles of this module and its children only.
    pub power_module: Option<String>,
    /// Whether per-run VCDs were written, and their cycle limit.
    pub vcd: bool,
    pub vcd_max_cycles: Option<usize>,
    /// Oracle files written next to the traces.
    pub oracles: Vec<OracleSpec>,
    pub rekey_epochs: Vec<EpochSpan>,
    /// Artifact name to path, relative to the manifest.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(cfg: &SimConfig, key_hex: String, plaintext_file: String, plaintext_count: usize) -> Self {
        Self {
            tool: "leakprobe".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            config: cfg.clone(),
            affine: serde_json::from_str(&cfg.affine.to_json()).expect("affine spec json"),
            key_hex,
            plaintext_file,
            plaintext_count,
            window: None,
            stop_at_window_end: false,
            power_module: None,
            vcd: false,
            vcd_max_cycles: None,
            oracles: Vec::new(),
            rekey_epochs: epoch_spans(cfg, plaintext_count as u64),
            outputs: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Parses a manifest and restores the affine spec into its config.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut m: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        m.config.affine = crate::obfuscation::AffineSpec::from_json(&m.affine.to_string()).map_err(|e| e.to_string())?;
        Ok(m)
    }
}

/// Attack outcome plus, when the true key byte is known, its disclosure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpaReport {
    pub attack: AttackResult,
    pub checkpoint_step: usize,
    pub true_key: Option<u8>,
    pub true_key_rank: Option<usize>,
    /// Traces after which the true key stays at rank 1.
    pub mtd: Option<usize>,
    pub disclosed: Option<bool>,
}

impl DpaReport {
    pub fn new(attack: AttackResult, checkpoint_step: usize, curve: Option<&MtdCurve>) -> Self {
        Self {
            checkpoint_step,
            true_key: curve.map(|c| c.true_key),
            true_key_rank: curve.map(|c| attack.rank_of(c.true_key)),
            mtd: curve.and_then(|c| c.mtd),
            disclosed: curve.map(|c| c.disclosed()),
            attack,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
