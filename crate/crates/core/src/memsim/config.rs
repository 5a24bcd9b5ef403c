use serde::{Deserialize, Serialize};

use super::SimError;
use crate::trace_io::MemoryMode;

pub const GIB: u64 = 1 << 30;

/// Capacities and calibration knobs of one socket's memory subsystem.
///
/// Bandwidths are MB/s (10^6 bytes per second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub mode: MemoryMode,
    pub dram_read_cap: f64,
    pub dram_write_cap: f64,
    pub nvm_read_cap: f64,
    pub nvm_write_cap: f64,
    /// Demanded write bandwidth above which reads and writes share a
    /// throttled budget.
    pub throttle_knee: f64,
    /// Concurrency at which NVM write bandwidth peaks.
    pub wpq_knee: f64,
    /// Per-thread write-bandwidth decay beyond `wpq_knee`.
    pub wpq_decay: f64,
    /// Throttled write ceiling as a fraction of the write cap.
    pub throttle_write_frac: f64,
    /// Shared read-unit budget under throttling, as a fraction of the read cap.
    pub throttle_read_budget: f64,
    /// Reads keep at least this fraction of the shared budget.
    pub throttle_read_floor: f64,
    /// Hit-ratio factor of the direct-mapped DRAM cache.
    pub conflict_factor: f64,
    pub dram_capacity_bytes: u64,
    pub socket: u16,
    pub dram_dimms: u16,
    pub nvm_dimms: u16,
    pub sample_interval_ms: u64,
    /// Half-width of the uniform multiplicative noise on emitted counters.
    pub jitter: f64,
    pub core_freq_hz: f64,
    /// Peak retire width used to derive stall cycles.
    pub ipc_max: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            mode: MemoryMode::UncachedNvm,
            // 230.4 GB/s across two sockets.
            dram_read_cap: 115_200.0,
            dram_write_cap: 115_200.0,
            nvm_read_cap: 39_000.0,
            nvm_write_cap: 13_000.0,
            throttle_knee: 2000.0,
            wpq_knee: 8.0,
            wpq_decay: 0.02,
            throttle_write_frac: 0.25,
            throttle_read_budget: 0.28,
            throttle_read_floor: 0.05,
            conflict_factor: 0.95,
            dram_capacity_bytes: 96 * GIB,
            socket: 0,
            dram_dimms: 6,
            nvm_dimms: 6,
            sample_interval_ms: 1000,
            jitter: 0.02,
            core_freq_hz: 2.4e9,
            ipc_max: 4.0,
        }
    }
}

impl MemoryConfig {
    pub fn with_mode(mode: MemoryMode) -> Self {
        MemoryConfig {
            mode,
            ..Default::default()
        }
    }

    /// Read cost of one unit of NVM write bandwidth.
    pub fn write_cost(&self) -> f64 {
        self.nvm_read_cap / self.nvm_write_cap
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dram_read_cap", self.dram_read_cap),
            ("dram_write_cap", self.dram_write_cap),
            ("nvm_read_cap", self.nvm_read_cap),
            ("nvm_write_cap", self.nvm_write_cap),
            ("wpq_knee", self.wpq_knee),
            ("throttle_write_frac", self.throttle_write_frac),
            ("throttle_read_budget", self.throttle_read_budget),
            ("core_freq_hz", self.core_freq_hz),
            ("ipc_max", self.ipc_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("conflict_factor", self.conflict_factor),
            ("throttle_read_floor", self.throttle_read_floor),
            ("jitter", self.jitter),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if [self.wpq_decay, self.throttle_knee].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(SimError::Config("wpq_decay and throttle_knee must be non-negative".into()));
        }
        if self.dram_capacity_bytes == 0 || self.sample_interval_ms == 0 || self.dram_dimms == 0 {
            return Err(SimError::Config(
                "dram_capacity_bytes, sample_interval_ms and dram_dimms must be non-zero".into(),
            ));
        }
        if self.mode != MemoryMode::DramOnly && self.nvm_dimms == 0 {
            return Err(SimError::Config("NVM modes need at least one NVDIMM".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: MemoryConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
