//! Sensitivity tiers, write-throttling risk, concurrency contention and
//! DRAM-cache effectiveness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{rw_ratio, Phase};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CharacterizeError {
    #[error("{name} must be {expect}, got {value}")]
    Domain {
        name: &'static str,
        expect: &'static str,
        value: f64,
    },
    #[error("neither a slowdown nor bandwidth figures are available")]
    InsufficientData,
}

fn require(name: &'static str, value: f64, ok: bool, expect: &'static str) -> Result<(), CharacterizeError> {
    if ok {
        Ok(())
    } else {
        Err(CharacterizeError::Domain { name, expect, value })
    }
}

/// Orientation of a performance figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    /// Run time; lower is better.
    #[serde(rename = "time")]
    TimeLowerBetter,
    /// Figure of merit; higher is better.
    #[serde(rename = "rate")]
    RateHigherBetter,
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "time" | "TimeLowerBetter" => Ok(MetricKind::TimeLowerBetter),
            "rate" | "fom" | "RateHigherBetter" => Ok(MetricKind::RateHigherBetter),
            other => Err(format!("unknown metric kind '{other}' (expected time or rate)")),
        }
    }
}

impl MetricKind {
    /// Relative performance of `perf` over `baseline`; above 1 means better.
    pub fn improvement(self, perf: f64, baseline: f64) -> f64 {
        match self {
            MetricKind::RateHigherBetter => perf / baseline,
            MetricKind::TimeLowerBetter => baseline / perf,
        }
    }
}

/// Whole-run bandwidth profile of one application on DRAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppMetrics {
    pub total_bw: Option<f64>,
    pub read_bw: Option<f64>,
    pub write_bw: Option<f64>,
    /// Uncached-NVM performance relative to DRAM, above 1 meaning slower.
    pub slowdown: Option<f64>,
}

impl AppMetrics {
    pub fn from_bandwidth(read_bw: f64, write_bw: f64) -> Self {
        AppMetrics {
            total_bw: Some(read_bw + write_bw),
            read_bw: Some(read_bw),
            write_bw: Some(write_bw),
            slowdown: None,
        }
    }

    pub fn total(&self) -> Option<f64> {
        self.total_bw
            .or_else(|| Some(self.read_bw? + self.write_bw?))
    }

    pub fn write_ratio(&self) -> Option<Result<f64, CharacterizeError>> {
        Some(write_ratio(self.read_bw?, self.write_bw?))
    }
}

/// Fraction of total traffic that is writes.
pub fn write_ratio(read_bw: f64, write_bw: f64) -> Result<f64, CharacterizeError> {
    require("read bandwidth", read_bw, read_bw >= 0.0, "non-negative")?;
    require("write bandwidth", write_bw, write_bw >= 0.0, "non-negative")?;
    let total = read_bw + write_bw;
    Ok(if total == 0.0 { 0.0 } else { write_bw / total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TierLabel {
    Insensitive,
    Scaled,
    Bottlenecked,
}

impl fmt::Display for TierLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TierLabel::Insensitive => "insensitive",
            TierLabel::Scaled => "scaled",
            TierLabel::Bottlenecked => "bottlenecked",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tier {
    pub label: TierLabel,
    pub borderline: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierThresholds {
    pub low: f64,
    pub high: f64,
    /// Relative half-width of the borderline band around each boundary.
    pub borderline_band: f64,
    /// Below this total bandwidth (MB/s) the advisory label is insensitive.
    pub bw_floor: f64,
    pub advisory_write: f64,
    pub advisory_rw: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds {
            low: 1.5,
            high: 5.0,
            borderline_band: 0.10,
            bw_floor: 500.0,
            advisory_write: 2000.0,
            advisory_rw: 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierVerdict {
    /// From the measured slowdown, when a DRAM baseline exists.
    pub tier: Option<Tier>,
    /// Bandwidth-only prediction.
    pub advisory: Option<TierLabel>,
}

pub fn tier_from_slowdown(slowdown: f64, th: &TierThresholds) -> Tier {
    let label = if slowdown <= th.low {
        TierLabel::Insensitive
    } else if slowdown <= th.high {
        TierLabel::Scaled
    } else {
        TierLabel::Bottlenecked
    };
    let near = |b: f64| (slowdown - b).abs() <= th.borderline_band * b;
    Tier {
        label,
        borderline: near(th.low) || near(th.high),
    }
}

pub fn advisory_tier(total_bw: f64, read_bw: f64, write_bw: f64, th: &TierThresholds) -> TierLabel {
    if total_bw < th.bw_floor {
        TierLabel::Insensitive
    } else if rw_ratio(read_bw, write_bw) < th.advisory_rw && write_bw > th.advisory_write {
        TierLabel::Bottlenecked
    } else {
        TierLabel::Scaled
    }
}

pub fn classify_tier(m: &AppMetrics, th: &TierThresholds) -> Result<TierVerdict, CharacterizeError> {
    let tier = match m.slowdown {
        Some(s) => {
            require("slowdown", s, s > 0.0 && s.is_finite(), "positive")?;
            Some(tier_from_slowdown(s, th))
        }
        None => None,
    };
    let advisory = match (m.total(), m.read_bw, m.write_bw) {
        (Some(total), Some(r), Some(w)) => Some(advisory_tier(total, r, w, th)),
        (Some(total), _, _) if total < th.bw_floor => Some(TierLabel::Insensitive),
        _ => None,
    };
    if tier.is_none() && advisory.is_none() {
        return Err(CharacterizeError::InsufficientData);
    }
    Ok(TierVerdict { tier, advisory })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThrottleRisk {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottleThresholds {
    /// MB/s of average write bandwidth on DRAM.
    pub write: f64,
    pub rw: f64,
}

impl Default for ThrottleThresholds {
    fn default() -> Self {
        ThrottleThresholds {
            write: 2000.0,
            rw: 2.5,
        }
    }
}

/// Risk that a phase profiled on DRAM will be write-throttled on NVM.
pub fn detect_write_throttling(p: &Phase, th: &ThrottleThresholds) -> ThrottleRisk {
    throttle_risk(p.avg_write_mbps, p.rw_ratio, th)
}

pub fn throttle_risk(avg_write: f64, rw: f64, th: &ThrottleThresholds) -> ThrottleRisk {
    if avg_write > th.write && rw < th.rw {
        ThrottleRisk::High
    } else {
        ThrottleRisk::Low
    }
}

fn positive_pair(a: f64, b: f64) -> Result<(), CharacterizeError> {
    require("performance", a, a > 0.0 && a.is_finite(), "positive")?;
    require("performance", b, b > 0.0 && b.is_finite(), "positive")
}

/// High-concurrency performance relative to low concurrency; above 1 means
/// the extra threads helped.
pub fn contention_ratio(perf_high: f64, perf_low: f64, kind: MetricKind) -> Result<f64, CharacterizeError> {
    positive_pair(perf_high, perf_low)?;
    Ok(kind.improvement(perf_high, perf_low))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentionVerdict {
    pub ratio_dram: f64,
    pub ratio_cached: Option<f64>,
    pub ratio_uncached: f64,
    pub contended_on_nvm: bool,
    pub gap: f64,
}

impl ContentionVerdict {
    pub fn new(ratio_dram: f64, ratio_cached: Option<f64>, ratio_uncached: f64, gap_threshold: f64) -> Self {
        let mut v = ContentionVerdict {
            ratio_dram,
            ratio_cached,
            ratio_uncached,
            contended_on_nvm: false,
            gap: ratio_dram - ratio_uncached,
        };
        v.contended_on_nvm = contention_flag(&v, gap_threshold);
        v
    }
}

/// Scaling loss on uncached NVM that DRAM does not show.
pub fn contention_flag(v: &ContentionVerdict, gap_threshold: f64) -> bool {
    v.ratio_uncached < 1.0 && (v.ratio_dram - v.ratio_uncached) > gap_threshold
}

/// Cached-NVM performance relative to DRAM for footprints that fit in DRAM.
pub fn cache_efficiency(perf_cached: f64, perf_dram: f64, kind: MetricKind) -> Result<f64, CharacterizeError> {
    positive_pair(perf_cached, perf_dram)?;
    Ok(kind.improvement(perf_cached, perf_dram))
}

/// Cached-NVM performance relative to uncached NVM.
pub fn cached_speedup(perf_cached: f64, perf_uncached: f64, kind: MetricKind) -> Result<f64, CharacterizeError> {
    positive_pair(perf_cached, perf_uncached)?;
    Ok(kind.improvement(perf_cached, perf_uncached))
}

/// Slowdown of NVM relative to DRAM, above 1 meaning slower.
pub fn slowdown(perf_nvm: f64, perf_dram: f64, kind: MetricKind) -> Result<f64, CharacterizeError> {
    positive_pair(perf_nvm, perf_dram)?;
    Ok(kind.improvement(perf_dram, perf_nvm))
}
