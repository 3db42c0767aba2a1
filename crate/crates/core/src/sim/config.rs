use serde::{Deserialize, Serialize};

use crate::obfuscation::{AddressGeometry, AffineSpec};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Baseline,
    Param,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "param" => Ok(Mode::Param),
            other => Err(format!("unknown mode {other:?} (expected baseline or param)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheGeometry {
    pub sets: usize,
    pub ways: usize,
    pub line_bytes: usize,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self { sets: 64, ways: 4, line_bytes: 64 }
    }
}

impl CacheGeometry {
    pub fn validate(&self) -> Result<(), SimError> {
        if !self.sets.is_power_of_two() || self.sets > 1 << 16 {
            return Err(SimError::Config(format!("cache.sets must be a power of two, got {}", self.sets)));
        }
        if self.ways == 0 || self.ways > 64 {
            return Err(SimError::Config(format!("cache.ways must be in 1..=64, got {}", self.ways)));
        }
        if self.line_bytes != 64 {
            return Err(SimError::Config(format!("cache.line_bytes must be 64, got {}", self.line_bytes)));
        }
        Ok(())
    }

    pub fn set_bits(&self) -> u32 {
        self.sets.trailing_zeros()
    }

    pub fn tag_bits(&self) -> u32 {
        32 - self.set_bits()
    }

    pub fn way_bits(&self) -> u32 {
        (usize::BITS - (self.ways - 1).leading_zeros()).max(1)
    }

    pub fn words_per_line(&self) -> usize {
        self.line_bytes / 8
    }

    pub fn address(&self) -> AddressGeometry {
        AddressGeometry::for_line_bytes(self.line_bytes as u64).expect("64-byte lines")
    }

    pub fn size_bytes(&self) -> usize {
        self.sets * self.ways * self.line_bytes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    /// Latch a constant instead of ALU operands in units that do not execute
    /// the operation. Defaults to off in baseline mode and on in param mode.
    pub eda_fix: bool,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub cache: CacheGeometry,
    /// Runs per key epoch in a batch; `None` never rekeys.
    pub rekey_interval_runs: Option<u64>,
    #[serde(skip)]
    pub affine: AffineSpec,
}

/// Noise level at which baseline first-order CPA on byte 0 discloses the key
/// within a few thousand traces.
pub const DEFAULT_NOISE_SIGMA: f64 = 300.0;

pub const DEFAULT_REKEY_INTERVAL: u64 = 1000;

impl SimConfig {
    pub fn baseline() -> Self {
        Self {
            mode: Mode::Baseline,
            eda_fix: false,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed: 0,
            cache: CacheGeometry::default(),
            rekey_interval_runs: Some(DEFAULT_REKEY_INTERVAL),
            affine: AffineSpec::default(),
        }
    }

    pub fn param() -> Self {
        Self { mode: Mode::Param, eda_fix: true, ..Self::baseline() }
    }

    pub fn for_mode(mode: Mode) -> Self {
        match mode {
            Mode::Baseline => Self::baseline(),
            Mode::Param => Self::param(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_eda_fix(mut self, on: bool) -> Self {
        self.eda_fix = on;
        self
    }

    pub fn with_rekey_interval(mut self, runs: Option<u64>) -> Self {
        self.rekey_interval_runs = runs;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.cache.validate()?;
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimError::Config(format!("noise_sigma must be finite and >= 0, got {}", self.noise_sigma)));
        }
        if self.rekey_interval_runs == Some(0) {
            return Err(SimError::Config("rekey_interval_runs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn is_param(&self) -> bool {
        self.mode == Mode::Param
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::baseline()
    }
}
