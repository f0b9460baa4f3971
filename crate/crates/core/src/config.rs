//! Configuration for the kernel, workloads, thresholds, and campaigns.
//!
//! All tunables flow through a flat key-value config file with `[section]`
//! headers. Unknown keys are rejected so typos fail loudly instead of
//! silently running with defaults.

use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("malformed line {line}: `{text}`")]
    Malformed { line: usize, text: String },
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Fault model selected for a whole campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultType {
    Transient,
    Permanent,
}

impl FaultType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FaultType::Transient => "transient",
            FaultType::Permanent => "permanent",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Kernel-level knobs: tick rate, priority levels, image capacity, stacks.
#[derive(Debug, Clone)]
pub struct KernelConfig {
    /// Simulated tick rate in Hz. One tick is one logical time unit; the
    /// rate only scales reporting, never wall-clock behavior.
    pub tick_rate_hz: u32,
    /// Number of task priority levels (ready lists). Max 7.
    pub priority_levels: u32,
    /// Image capacity in bytes, power of two.
    pub image_capacity: u32,
    /// Stack region size per task, in 32-bit words.
    pub stack_words: u32,
    /// List traversal budget = multiplier x total allocated list items.
    pub traversal_budget_multiplier: u32,
    /// When true a traversal overrun classifies as HANG instead of CRASH.
    pub overrun_as_hang: bool,
    /// Timer command queue capacity (entries).
    pub timer_queue_len: u32,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            tick_rate_hz: 1000,
            priority_levels: 7,
            image_capacity: 64 * 1024,
            stack_words: 256,
            traversal_budget_multiplier: 10,
            overrun_as_hang: false,
            timer_queue_len: 8,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.tick_rate_hz == 0 {
            return Err(ConfigError::InvalidValue {
                key: "kernel.tick_rate_hz".into(),
                reason: "must be > 0".into(),
            });
        }
        if self.priority_levels == 0 || self.priority_levels > 7 {
            return Err(ConfigError::InvalidValue {
                key: "kernel.priority_levels".into(),
                reason: "must be in 1..=7".into(),
            });
        }
        if !self.image_capacity.is_power_of_two() {
            return Err(ConfigError::InvalidValue {
                key: "kernel.image_capacity".into(),
                reason: "must be a power of two".into(),
            });
        }
        if self.stack_words < 16 {
            return Err(ConfigError::InvalidValue {
                key: "kernel.stack_words".into(),
                reason: "must be >= 16".into(),
            });
        }
        Ok(())
    }
}

/// Workload input sizes and cooperative yield strides.
#[derive(Debug, Clone)]
pub struct WorkloadConfig {
    pub sha_input_bytes: u32,
    pub fft_points: u32,
    pub huff_corpus_bytes: u32,
    pub adpcm_samples: u32,
    pub cubic_equations: u32,
    pub yield_stride_sha: u32,
    pub yield_stride_fft: u32,
    pub yield_stride_cubic: u32,
    pub yield_stride_huff: u32,
    pub yield_stride_adpcm: u32,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            sha_input_bytes: 4096,
            fft_points: 64,
            huff_corpus_bytes: 2048,
            adpcm_samples: 1024,
            cubic_equations: 16,
            yield_stride_sha: 2,
            yield_stride_fft: 8,
            yield_stride_cubic: 1,
            yield_stride_huff: 64,
            yield_stride_adpcm: 32,
        }
    }
}

/// Outcome classification thresholds.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    /// A run is late when run_ticks > (1 + delay_fraction) x golden ticks.
    pub delay_fraction: f64,
    /// Forced stop at hang_multiplier x golden ticks.
    pub hang_multiplier: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            delay_fraction: 0.05,
            hang_multiplier: 3.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delay_fraction > 0.0 && self.delay_fraction < self.hang_multiplier) {
            return Err(ConfigError::InvalidValue {
                key: "thresholds.delay_fraction".into(),
                reason: "requires 0 < delay_fraction < hang_multiplier".into(),
            });
        }
        Ok(())
    }
}

/// Campaign planning and execution parameters.
#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub fault_type: FaultType,
    pub confidence: f64,
    pub margin: f64,
    pub p: f64,
    /// Overrides the computed sample size when set.
    pub n_per_location: Option<u32>,
    /// Injection window as a fraction of the golden event timeline.
    pub window_fraction: f64,
    pub thresholds: Thresholds,
    pub seed: u64,
    pub workers: u32,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            fault_type: FaultType::Transient,
            confidence: 0.99,
            margin: 0.05,
            p: 0.5,
            n_per_location: None,
            window_fraction: 0.10,
            thresholds: Thresholds::default(),
            seed: 1,
            workers: 4,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(ConfigError::InvalidValue {
                key: "campaign.margin".into(),
                reason: "must satisfy 0 < margin < 1".into(),
            });
        }
        if !(self.confidence >= 0.5 && self.confidence < 1.0) {
            return Err(ConfigError::InvalidValue {
                key: "campaign.confidence".into(),
                reason: "must satisfy 0.5 <= confidence < 1".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ConfigError::InvalidValue {
                key: "campaign.p".into(),
                reason: "must satisfy 0 <= p <= 1".into(),
            });
        }
        if self.workers == 0 {
            return Err(ConfigError::InvalidValue {
                key: "campaign.workers".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(ConfigError::InvalidValue {
                key: "campaign.window_fraction".into(),
                reason: "must satisfy 0 < window_fraction <= 1".into(),
            });
        }
        self.thresholds.validate()
    }
}

/// Everything a run needs, bundled.
#[derive(Debug, Clone, Default)]
pub struct Config {
    pub kernel: KernelConfig,
    pub workloads: WorkloadConfig,
    pub campaign: CampaignConfig,
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.kernel.validate()?;
        if !self.workloads.fft_points.is_power_of_two()
            || !(4..=64).contains(&self.workloads.fft_points)
        {
            return Err(ConfigError::InvalidValue {
                key: "workloads.fft_points".into(),
                reason: "must be a power of two in 4..=64".into(),
            });
        }
        self.campaign.validate()
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_checked(&text)
    }

    /// Parses the flat `[section]` / `key = value` format. Every key has a
    /// documented default; unknown keys are an error.
    pub fn from_str_checked(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            cfg.apply(&full, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::InvalidValue {
                key: key.into(),
                reason: format!("cannot parse `{value}`"),
            })
        }
        match key {
            "kernel.tick_rate_hz" => self.kernel.tick_rate_hz = num(key, value)?,
            "kernel.priority_levels" => self.kernel.priority_levels = num(key, value)?,
            "kernel.image_capacity" => self.kernel.image_capacity = num(key, value)?,
            "kernel.stack_words" => self.kernel.stack_words = num(key, value)?,
            "kernel.traversal_budget_multiplier" => {
                self.kernel.traversal_budget_multiplier = num(key, value)?
            }
            "kernel.overrun_as_hang" => self.kernel.overrun_as_hang = num(key, value)?,
            "kernel.timer_queue_len" => self.kernel.timer_queue_len = num(key, value)?,
            "workloads.sha_input_bytes" => self.workloads.sha_input_bytes = num(key, value)?,
            "workloads.fft_points" => self.workloads.fft_points = num(key, value)?,
            "workloads.huff_corpus_bytes" => self.workloads.huff_corpus_bytes = num(key, value)?,
            "workloads.adpcm_samples" => self.workloads.adpcm_samples = num(key, value)?,
            "workloads.cubic_equations" => self.workloads.cubic_equations = num(key, value)?,
            "workloads.yield_stride_sha" => self.workloads.yield_stride_sha = num(key, value)?,
            "workloads.yield_stride_fft" => self.workloads.yield_stride_fft = num(key, value)?,
            "workloads.yield_stride_cubic" => self.workloads.yield_stride_cubic = num(key, value)?,
            "workloads.yield_stride_huff" => self.workloads.yield_stride_huff = num(key, value)?,
            "workloads.yield_stride_adpcm" => self.workloads.yield_stride_adpcm = num(key, value)?,
            "campaign.fault_type" => {
                self.campaign.fault_type = match value {
                    "transient" => FaultType::Transient,
                    "permanent" => FaultType::Permanent,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            reason: "expected `transient` or `permanent`".into(),
                        })
                    }
                }
            }
            "campaign.confidence" => self.campaign.confidence = num(key, value)?,
            "campaign.margin" => self.campaign.margin = num(key, value)?,
            "campaign.p" => self.campaign.p = num(key, value)?,
            "campaign.n_per_location" => self.campaign.n_per_location = Some(num(key, value)?),
            "campaign.window_fraction" => self.campaign.window_fraction = num(key, value)?,
            "campaign.seed" => self.campaign.seed = num(key, value)?,
            "campaign.workers" => self.campaign.workers = num(key, value)?,
            "thresholds.delay_fraction" => {
                self.campaign.thresholds.delay_fraction = num(key, value)?
            }
            "thresholds.hang_multiplier" => {
                self.campaign.thresholds.hang_multiplier = num(key, value)?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

}
