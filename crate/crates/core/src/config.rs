//! Analysis thresholds and the optional TOML file that overrides them.
//!
//! ```toml
//! [thresholds]
//! tier_low = 1.5
//! write_thresh = 2500.0
//!
//! [memory]
//! mode = "cached-nvm"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandwidth::SegmentParams;
use crate::characterize::{ThrottleThresholds, TierThresholds};
use crate::memsim::MemoryConfig;
use crate::placement::MIB;

pub const CONFIG_ENV: &str = "NVMLENS_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("threshold {name}: {msg}")]
    Invalid { name: &'static str, msg: String },
}

/// Every tunable the analyses consult, with its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub tier_low: f64,
    pub tier_high: f64,
    pub borderline_band: f64,
    pub bw_floor: f64,
    /// MB/s of average DRAM write bandwidth marking throttling risk.
    pub write_thresh: f64,
    pub rw_thresh: f64,
    pub gap_thresh: f64,
    pub alpha: f64,
    pub max_phases: usize,
    pub min_phase_len: usize,
    pub segment_penalty: f64,
    /// Centered moving-average length applied before segmentation.
    pub smoothing_window: usize,
    pub granule_bytes: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let tier = TierThresholds::default();
        let throttle = ThrottleThresholds::default();
        let seg = SegmentParams::default();
        Thresholds {
            tier_low: tier.low,
            tier_high: tier.high,
            borderline_band: tier.borderline_band,
            bw_floor: tier.bw_floor,
            write_thresh: throttle.write,
            rw_thresh: throttle.rw,
            gap_thresh: 0.15,
            alpha: 0.05,
            max_phases: seg.max_phases,
            min_phase_len: seg.min_phase_len,
            segment_penalty: seg.penalty,
            smoothing_window: 1,
            granule_bytes: MIB,
        }
    }
}

impl Thresholds {
    pub fn tier(&self) -> TierThresholds {
        TierThresholds {
            low: self.tier_low,
            high: self.tier_high,
            borderline_band: self.borderline_band,
            bw_floor: self.bw_floor,
            advisory_write: self.write_thresh,
            advisory_rw: self.rw_thresh,
        }
    }

    pub fn throttle(&self) -> ThrottleThresholds {
        ThrottleThresholds {
            write: self.write_thresh,
            rw: self.rw_thresh,
        }
    }

    pub fn segment(&self) -> SegmentParams {
        SegmentParams {
            max_phases: self.max_phases,
            min_phase_len: self.min_phase_len,
            penalty: self.segment_penalty,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |name, msg: &str| Err(ConfigError::Invalid { name, msg: msg.into() });
        if !(self.tier_low > 0.0 && self.tier_low < self.tier_high && self.tier_high.is_finite()) {
            return bad("tier_low/tier_high", "need 0 < tier_low < tier_high");
        }
        if !(0.0..1.0).contains(&self.borderline_band) {
            return bad("borderline_band", "must lie in [0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", "must lie in (0, 1)");
        }
        for (name, v) in [
            ("bw_floor", self.bw_floor),
            ("write_thresh", self.write_thresh),
            ("rw_thresh", self.rw_thresh),
            ("gap_thresh", self.gap_thresh),
            ("segment_penalty", self.segment_penalty),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be finite and non-negative");
            }
        }
        if self.max_phases == 0 || self.min_phase_len == 0 || self.smoothing_window == 0 {
            return bad("max_phases/min_phase_len/smoothing_window", "must be at least 1");
        }
        if self.granule_bytes == 0 {
            return bad("granule_bytes", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub thresholds: Thresholds,
    pub memory: Option<MemoryConfig>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str, label: &str) -> Result<Self, ConfigError> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: label.into(),
            msg: e.to_string(),
        })?;
        cfg.thresholds.validate()?;
        if let Some(m) = &cfg.memory {
            m.validate().map_err(|e| ConfigError::Parse {
                path: label.into(),
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let label = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: label.clone(),
            msg: e.to_string(),
        })?;
        Self::from_toml_str(&text, &label)
    }
}
