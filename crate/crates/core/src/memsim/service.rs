//! Steady-state bandwidth service of DRAM and NVM.

use serde::{Deserialize, Serialize};

use super::{MemoryConfig, SimError};

/// NVM write ceiling at `concurrency` threads.
///
/// Rises linearly until the write-pending queue is saturated at `wpq_knee`
/// threads and decays hyperbolically beyond it.
pub fn nvm_write_cap(concurrency: f64, cfg: &MemoryConfig) -> f64 {
    let ramp = (concurrency / cfg.wpq_knee).min(1.0);
    let decay = 1.0 + cfg.wpq_decay * (concurrency - cfg.wpq_knee).max(0.0);
    cfg.nvm_write_cap * ramp / decay
}

/// NVM read ceiling at `concurrency` threads.
pub fn nvm_read_cap(concurrency: f64, cfg: &MemoryConfig) -> f64 {
    cfg.nvm_read_cap * (0.25 + 0.75 * concurrency / cfg.wpq_knee).min(1.0)
}

/// Achieved (read, write) MB/s on NVM for the given demand.
///
/// Below the throttle knee each channel is capped independently. Above it
/// the write stream saturates towards a throttled ceiling and both channels
/// draw on one budget in which a write unit costs `write_cost()` read units;
/// reads get what the writes leave over.
pub fn nvm_service(demand_read: f64, demand_write: f64, concurrency: u32, cfg: &MemoryConfig) -> (f64, f64) {
    let c = concurrency as f64;
    let wcap = nvm_write_cap(c, cfg);
    let rcap = nvm_read_cap(c, cfg);
    if demand_write <= cfg.throttle_knee {
        return (demand_read.min(rcap), demand_write.min(wcap));
    }
    let ceiling = cfg.throttle_write_frac * wcap;
    let write = ceiling * demand_write / (demand_write + ceiling);
    let budget = cfg.throttle_read_budget * rcap;
    let left = (budget - cfg.write_cost() * write).max(cfg.throttle_read_floor * budget);
    (demand_read.min(rcap).min(left), write)
}

pub fn dram_service(demand_read: f64, demand_write: f64, cfg: &MemoryConfig) -> (f64, f64) {
    (demand_read.min(cfg.dram_read_cap), demand_write.min(cfg.dram_write_cap))
}

/// How much longer traffic takes when served at `achieved` instead of
/// `demand`; never below 1.
pub fn stretch(demand: (f64, f64), achieved: (f64, f64)) -> f64 {
    let ratio = |d: f64, a: f64| if d <= 0.0 { 1.0 } else if a <= 0.0 { f64::INFINITY } else { d / a };
    ratio(demand.0, achieved.0).max(ratio(demand.1, achieved.1)).max(1.0)
}

/// Per-device traffic of a DRAM cache in front of NVM, in MB/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheTraffic {
    pub hit_ratio: f64,
    pub dram_read: f64,
    pub dram_write: f64,
    pub nvm_read: f64,
    pub nvm_write: f64,
}

/// Footprint-ratio model of a direct-mapped write-back DRAM cache.
///
/// Misses fetch from NVM and fill into DRAM, so DRAM sees extra writes
/// equal to the fill traffic; dirty evictions write back to NVM.
pub fn dram_cache(
    footprint_bytes: u64,
    dram_capacity_bytes: u64,
    demand_read: f64,
    demand_write: f64,
    cfg: &MemoryConfig,
) -> Result<CacheTraffic, SimError> {
    if footprint_bytes == 0 {
        return Err(SimError::Degenerate("zero footprint in cached mode".into()));
    }
    let fit = (dram_capacity_bytes as f64 / footprint_bytes as f64).min(1.0);
    let h = fit * cfg.conflict_factor;
    let fill = (1.0 - h) * demand_read;
    Ok(CacheTraffic {
        hit_ratio: h,
        dram_read: demand_read,
        dram_write: demand_write + fill,
        nvm_read: fill,
        nvm_write: (1.0 - h) * demand_write,
    })
}
