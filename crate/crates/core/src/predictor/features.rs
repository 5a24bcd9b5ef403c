use serde::{Deserialize, Serialize};

use super::PredictError;
use crate::trace_io::{CoreSample, Window, EVENT_COUNT};

pub const EVENT_NAMES: [&str; EVENT_COUNT] = [
    "p0_instructions_retired",
    "p1_cycles_active",
    "p2_resource_stall_cycles",
    "p3_offcore_wait_cycles",
    "p4_imc_reads",
    "p5_imc_writes",
];

/// Window-total event counts and their IPC-scaled form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub raw_counts: [f64; EVENT_COUNT],
    pub ipc_s: f64,
    pub scaled: [f64; EVENT_COUNT],
}

impl FeatureVector {
    pub fn new(raw_counts: [f64; EVENT_COUNT], ipc_s: f64) -> Self {
        FeatureVector {
            raw_counts,
            ipc_s,
            scaled: raw_counts.map(|n| n * ipc_s),
        }
    }

    pub fn from_sample(sample: &CoreSample) -> Result<Self, PredictError> {
        let ipc = sample.ipc().ok_or(PredictError::DegenerateIpc)?;
        Ok(Self::new(sample.events.map(|e| e as f64), ipc))
    }
}

/// Sums events over samples whose interval ends in `(start, end]` and scales
/// them by the window's IPC.
pub fn extract_features(samples: &[CoreSample], window: Window) -> Result<FeatureVector, PredictError> {
    let mut raw = [0f64; EVENT_COUNT];
    let mut any = false;
    for s in samples
        .iter()
        .filter(|s| s.timestamp_ms > window.start_ms && s.timestamp_ms <= window.end_ms)
    {
        any = true;
        for (acc, e) in raw.iter_mut().zip(s.events) {
            *acc += e as f64;
        }
    }
    if !any {
        return Err(PredictError::EmptyWindow);
    }
    if raw[1] == 0.0 {
        return Err(PredictError::DegenerateIpc);
    }
    Ok(FeatureVector::new(raw, raw[0] / raw[1]))
}

/// Per-feature zero-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl NormalizationParams {
    /// Constant features carry no information and are left out of models.
    pub fn is_constant(&self, i: usize) -> bool {
        self.stddev[i] <= 1e-12 * self.mean[i].abs() || self.stddev[i] == 0.0
    }

    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.mean.len()).filter(|&i| self.is_constant(i)).collect()
    }

    pub fn zscore(&self, i: usize, value: f64) -> f64 {
        if self.is_constant(i) {
            0.0
        } else {
            (value - self.mean[i]) / self.stddev[i]
        }
    }
}

pub fn fit_normalization(features: &[FeatureVector]) -> Result<NormalizationParams, PredictError> {
    fit_columns(features.iter().map(|f| f.scaled.as_slice()), features.len())
}

pub(crate) fn fit_columns<'a>(
    rows: impl Iterator<Item = &'a [f64]> + Clone,
    n: usize,
) -> Result<NormalizationParams, PredictError> {
    if n < 2 {
        return Err(PredictError::InsufficientData { rows: n, needed: 2 });
    }
    let width = rows.clone().next().map_or(0, <[f64]>::len);
    let mut mean = vec![0.0; width];
    for r in rows.clone() {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; width];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let stddev = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    Ok(NormalizationParams { mean, stddev })
}

pub fn apply_normalization(params: &NormalizationParams, feature: &FeatureVector) -> Vec<f64> {
    feature
        .scaled
        .iter()
        .enumerate()
        .map(|(i, &x)| params.zscore(i, x))
        .collect()
}
