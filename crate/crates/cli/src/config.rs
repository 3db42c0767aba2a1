//! Simulator configuration: TOML file, then `LEAKPROBE_*` environment
//! variables, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use figment::providers::{Env, Format, Toml};
use figment::Figment;
use serde::Deserialize;

use leakprobe::obfuscation::AffineSpec;
use leakprobe::sim::{CacheGeometry, Mode, SimConfig};

pub const ENV_PREFIX: &str = "LEAKPROBE_";

/// Keys accepted in the config file. Every field is optional; unset fields
/// take the defaults of the selected mode.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub eda_fix: Option<bool>,
    pub noise_sigma: Option<f64>,
    pub seed: Option<u64>,
    /// Runs per key epoch; 0 never rekeys.
    pub rekey_interval_runs: Option<u64>,
    pub cache: Option<CacheConfig>,
    /// JSON file with a custom affine round function.
    pub affine_spec: Option<PathBuf>,
}

#[derive(Debug, Default, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    pub sets: Option<usize>,
    pub ways: Option<usize>,
    pub line_bytes: Option<usize>,
}

impl CacheConfig {
    fn over(&self, base: CacheGeometry) -> CacheGeometry {
        CacheGeometry {
            sets: self.sets.unwrap_or(base.sets),
            ways: self.ways.unwrap_or(base.ways),
            line_bytes: self.line_bytes.unwrap_or(base.line_bytes),
        }
    }
}

const KEYS: [&str; 7] = ["mode", "eda_fix", "noise_sigma", "seed", "rekey_interval_runs", "cache", "affine_spec"];

impl FileConfig {
    /// Reads `path` (if given) and overlays matching environment variables,
    /// e.g. `LEAKPROBE_NOISE_SIGMA=250` or `LEAKPROBE_CACHE__WAYS=2`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut fig = Figment::new();
        if let Some(p) = path {
            if !p.is_file() {
                bail!("config file {} not found", p.display());
            }
            fig = fig.merge(Toml::file(p));
        }
        let env = Env::prefixed(ENV_PREFIX)
            .split("__")
            .filter(|k| {
                let k = k.as_str().to_ascii_lowercase();
                KEYS.iter().any(|known| k == *known || k.starts_with(&format!("{known}.")))
            });
        fig.merge(env).extract().map_err(|e| {
            let mut msg = String::from("invalid config");
            for err in e {
                msg.push_str(&format!("\n  {err}"));
            }
            anyhow::anyhow!(msg)
        })
    }

    /// Builds a validated simulator config. `seed` and `mode` from the
    /// command line win over the file.
    pub fn to_sim(&self, seed: Option<u64>, mode: Option<Mode>) -> Result<SimConfig> {
        let mut cfg = SimConfig::for_mode(mode.or(self.mode).unwrap_or_default());
        if let Some(v) = self.eda_fix {
            cfg.eda_fix = v;
        }
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = seed.or(self.seed) {
            cfg.seed = v;
        }
        if let Some(v) = self.rekey_interval_runs {
            cfg.rekey_interval_runs = (v > 0).then_some(v);
        }
        if let Some(c) = self.cache {
            cfg.cache = c.over(cfg.cache);
        }
        if let Some(p) = &self.affine_spec {
            cfg.affine = load_affine(p)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn load_affine(path: &Path) -> Result<AffineSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading affine spec {}", path.display()))?;
    AffineSpec::from_json(&text).with_context(|| format!("affine spec {}", path.display()))
}
