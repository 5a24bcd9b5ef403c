//! IPC prediction from IPC-scaled, zero-scored core events.
//!
//! The model is `IPC_p = sum_i beta_i * z(N_i * IPC_s) + sigma`, where `N_i`
//! are window-total event counts, `IPC_s` the sampled IPC of the same window,
//! `z` the zero score over the training set and `sigma` the fitted intercept.

mod features;
mod ols;
pub mod student_t;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use features::{
    apply_normalization, extract_features, fit_normalization, FeatureVector, NormalizationParams,
    EVENT_NAMES,
};
pub use ols::{centered_rank, ols_fit, OlsFit};

use crate::trace_io::{CoreSample, Window, EVENT_COUNT};

pub const MODEL_FORMAT: &str = "nvmlens-ipc-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum PredictError {
    #[error("insufficient data: {rows} rows, need at least {needed}")]
    InsufficientData { rows: usize, needed: usize },
    #[error("window contains no core samples")]
    EmptyWindow,
    #[error("zero active cycles, IPC undefined")]
    DegenerateIpc,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("feature vector lacks event {0} required by the model")]
    IncompatibleFeature(usize),
    #[error("observed IPC must be positive, got {0}")]
    NonPositiveObserved(f64),
    #[error("training plan: {0}")]
    Plan(String),
    #[error("model file: {0}")]
    ModelFile(String),
}

/// Why a candidate event is not in the final model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Removal {
    Constant { event: usize },
    Collinear { event: usize },
    Insignificant { event: usize, p_value: f64 },
}

impl Removal {
    pub fn event(&self) -> usize {
        match *self {
            Removal::Constant { event }
            | Removal::Collinear { event }
            | Removal::Insignificant { event, .. } => event,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruneStatus {
    Converged,
    /// No p-values could be computed; the full model was kept.
    SkippedNoPValues,
}

/// Result of significance-based backward elimination over candidate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    /// Column indices (into the candidate matrix) that survived.
    pub kept: Vec<usize>,
    pub fit: OlsFit,
    /// In removal order.
    pub removed: Vec<Removal>,
    pub status: PruneStatus,
    pub iterations: usize,
}

fn select_columns(x: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, j| x[(i, cols[j])])
}

/// Drops the worst column (largest p-value, lowest index on ties) and refits
/// until every p-value is at most `alpha` or one column is left.
///
/// Exactly collinear columns are resolved first: columns are admitted in
/// index order and skipped when they do not raise the rank.
pub fn backward_eliminate(x: &DMatrix<f64>, y: &[f64], alpha: f64) -> Result<Elimination, PredictError> {
    let p = x.ncols();
    let mut removed = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for c in 0..p {
        let mut trial = kept.clone();
        trial.push(c);
        if centered_rank(&select_columns(x, &trial)) == trial.len() {
            kept = trial;
        } else {
            removed.push(Removal::Collinear { event: c });
        }
    }
    if kept.is_empty() && p > 0 {
        // Every column is constant; keep the first so the model has a slot.
        kept.push(0);
        removed.retain(|r| r.event() != 0);
    }
    let mut fit = ols_fit(&select_columns(x, &kept), y)?;
    let mut iterations = 0;
    let status = loop {
        let Some(pv) = fit.p_value.clone() else {
            break PruneStatus::SkippedNoPValues;
        };
        if kept.len() <= 1 {
            break PruneStatus::Converged;
        }
        let mut worst = 0;
        for (i, v) in pv.iter().enumerate() {
            if *v > pv[worst] {
                worst = i;
            }
        }
        if pv[worst] <= alpha {
            break PruneStatus::Converged;
        }
        removed.push(Removal::Insignificant {
            event: kept[worst],
            p_value: pv[worst],
        });
        kept.remove(worst);
        fit = ols_fit(&select_columns(x, &kept), y)?;
        iterations += 1;
    };
    Ok(Elimination {
        kept,
        fit,
        removed,
        status,
        iterations,
    })
}

/// Fitted IPC model plus everything needed to apply it to new windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub format: String,
    pub version: u32,
    pub events: Vec<String>,
    /// Indices into [`EVENT_NAMES`].
    pub included: Vec<usize>,
    pub beta: Vec<f64>,
    /// Fitted regression intercept (the additive constant of the model).
    pub sigma: f64,
    pub std_err: Option<Vec<f64>>,
    pub t_stat: Option<Vec<f64>>,
    pub p_value: Option<Vec<f64>>,
    pub r_squared: f64,
    pub rss: f64,
    pub n_obs: usize,
    pub dof: usize,
    pub alpha: f64,
    pub norm: NormalizationParams,
    pub removed: Vec<Removal>,
    pub prune_status: PruneStatus,
}

impl RegressionModel {
    pub fn predict_normalized(&self, normalized: &[f64]) -> Result<f64, PredictError> {
        let mut acc = self.sigma;
        for (b, &e) in self.beta.iter().zip(&self.included) {
            let z = normalized.get(e).ok_or(PredictError::IncompatibleFeature(e))?;
            acc += b * z;
        }
        Ok(acc)
    }

    pub fn save(&self, path: &Path) -> Result<(), PredictError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| PredictError::ModelFile(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, PredictError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PredictError::ModelFile(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let m: RegressionModel =
            serde_json::from_str(text).map_err(|e| PredictError::ModelFile(e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(PredictError::ModelFile(format!(
                "unsupported model '{}' version {}",
                m.format, m.version
            )));
        }
        if m.beta.len() != m.included.len()
            || m.norm.mean.len() != EVENT_COUNT
            || m.norm.stddev.len() != EVENT_COUNT
        {
            return Err(PredictError::ModelFile("inconsistent coefficient arrays".into()));
        }
        if let Some(&bad) = m.included.iter().find(|&&e| e >= EVENT_COUNT) {
            return Err(PredictError::IncompatibleFeature(bad));
        }
        Ok(m)
    }
}

/// Normalizes, drops constant events, prunes by significance and fits.
pub fn train_model(
    features: &[FeatureVector],
    observed_ipc: &[f64],
    alpha: f64,
) -> Result<RegressionModel, PredictError> {
    if features.len() != observed_ipc.len() {
        return Err(PredictError::Shape(format!(
            "{} feature vectors but {} observations",
            features.len(),
            observed_ipc.len()
        )));
    }
    let norm = fit_normalization(features)?;
    let mut removed: Vec<Removal> = norm
        .constant_features()
        .into_iter()
        .map(|event| Removal::Constant { event })
        .collect();
    let candidates: Vec<usize> = (0..EVENT_COUNT).filter(|&i| !norm.is_constant(i)).collect();
    if candidates.is_empty() {
        return Err(PredictError::Shape("every event is constant over the training set".into()));
    }
    let n = features.len();
    let z: Vec<Vec<f64>> = features.iter().map(|f| apply_normalization(&norm, f)).collect();
    let x = DMatrix::from_fn(n, candidates.len(), |i, j| z[i][candidates[j]]);
    let elim = backward_eliminate(&x, observed_ipc, alpha)?;
    removed.extend(elim.removed.iter().map(|r| match *r {
        Removal::Constant { event } => Removal::Constant {
            event: candidates[event],
        },
        Removal::Collinear { event } => Removal::Collinear {
            event: candidates[event],
        },
        Removal::Insignificant { event, p_value } => Removal::Insignificant {
            event: candidates[event],
            p_value,
        },
    }));
    let fit = elim.fit;
    Ok(RegressionModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        events: EVENT_NAMES.iter().map(|s| s.to_string()).collect(),
        included: elim.kept.iter().map(|&c| candidates[c]).collect(),
        beta: fit.coef,
        sigma: fit.intercept,
        std_err: fit.std_err,
        t_stat: fit.t_stat,
        p_value: fit.p_value,
        r_squared: fit.r_squared,
        rss: fit.rss,
        n_obs: fit.n_obs,
        dof: fit.dof,
        alpha,
        norm,
        removed,
        prune_status: elim.status,
    })
}

pub fn predict_ipc(model: &RegressionModel, feature: &FeatureVector) -> Result<f64, PredictError> {
    if model.norm.mean.len() < EVENT_COUNT {
        return Err(PredictError::IncompatibleFeature(model.norm.mean.len()));
    }
    model.predict_normalized(&apply_normalization(&model.norm, feature))
}

/// `1 - |predicted - observed| / observed`; negative for very poor predictions.
pub fn accuracy(predicted: f64, observed: f64) -> Result<f64, PredictError> {
    if observed <= 0.0 || observed.is_nan() {
        return Err(PredictError::NonPositiveObserved(observed));
    }
    Ok(1.0 - (predicted - observed).abs() / observed)
}

/// Splits core samples into consecutive windows of `window_len` samples and
/// returns each window's features with its own IPC as the label. A short
/// tail is dropped.
pub fn windowed_dataset(
    samples: &[CoreSample],
    window_len: usize,
) -> Result<(Vec<FeatureVector>, Vec<f64>), PredictError> {
    if window_len == 0 {
        return Err(PredictError::Shape("window length must be at least one sample".into()));
    }
    let mut feats = Vec::new();
    let mut ipc = Vec::new();
    for chunk in samples.chunks_exact(window_len) {
        let window = Window {
            start_ms: chunk[0].timestamp_ms.saturating_sub(1),
            end_ms: chunk[window_len - 1].timestamp_ms,
        };
        let f = extract_features(chunk, window)?;
        ipc.push(f.ipc_s);
        feats.push(f);
    }
    if feats.is_empty() {
        return Err(PredictError::EmptyWindow);
    }
    Ok((feats, ipc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    MidConcurrency,
    SmallSize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRung {
    pub label: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub strategy: Strategy,
    pub concurrency: u32,
    /// The input size to train on, for [`Strategy::SmallSize`].
    pub size: Option<SizeRung>,
}

/// Trains at `round(0.75 * HT)` threads.
pub fn plan_mid_concurrency(hardware_threads: u32) -> Result<TrainingPlan, PredictError> {
    if hardware_threads < 2 {
        return Err(PredictError::Plan(format!(
            "need at least 2 hardware threads, got {hardware_threads}"
        )));
    }
    let anchor = (0.75 * hardware_threads as f64).round() as u32;
    Ok(TrainingPlan {
        strategy: Strategy::MidConcurrency,
        concurrency: anchor.clamp(1, hardware_threads),
        size: None,
    })
}

/// Trains on the smallest input of the ladder at a fixed concurrency.
pub fn plan_small_size(ladder: &[SizeRung], concurrency: u32) -> Result<TrainingPlan, PredictError> {
    let smallest = ladder
        .iter()
        .min_by_key(|r| r.bytes)
        .ok_or_else(|| PredictError::Plan("empty size ladder".into()))?;
    Ok(TrainingPlan {
        strategy: Strategy::SmallSize,
        concurrency,
        size: Some(smallest.clone()),
    })
}
