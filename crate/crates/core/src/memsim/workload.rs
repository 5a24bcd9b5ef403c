use serde::{Deserialize, Serialize};

use super::SimError;

/// One stretch of steady demand, as it would run on unconstrained memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadPhase {
    pub duration_s: f64,
    /// MB/s.
    pub demand_read: f64,
    /// MB/s.
    pub demand_write: f64,
    /// Per-core IPC when memory keeps up.
    #[serde(default = "default_ipc")]
    pub base_ipc: f64,
}

fn default_ipc() -> f64 {
    1.0
}

/// A data structure and its share of the workload's traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataObject {
    pub name: String,
    pub size_bytes: u64,
    pub read_share: f64,
    pub write_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub concurrency: u32,
    pub footprint_bytes: u64,
    #[serde(default)]
    pub rng_seed: u64,
    pub phases: Vec<WorkloadPhase>,
    #[serde(default)]
    pub objects: Vec<DataObject>,
}

fn default_name() -> String {
    "workload".into()
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Workload(msg));
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        if self.concurrency == 0 {
            return bad("concurrency must be at least 1".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration_s > 0.0 && p.duration_s.is_finite()) {
                return bad(format!("phase {i}: duration must be positive"));
            }
            if !(p.demand_read >= 0.0 && p.demand_write >= 0.0)
                || !p.demand_read.is_finite()
                || !p.demand_write.is_finite()
            {
                return bad(format!("phase {i}: demands must be finite and non-negative"));
            }
            if !(p.base_ipc > 0.0 && p.base_ipc.is_finite()) {
                return bad(format!("phase {i}: base_ipc must be positive"));
            }
        }
        validate_objects(&self.objects)
    }

    pub fn nominal_runtime_s(&self) -> f64 {
        self.phases.iter().map(|p| p.duration_s).sum()
    }

    /// Same workload at another thread count, demands scaled linearly.
    pub fn scaled_to_concurrency(&self, concurrency: u32) -> Self {
        let k = concurrency as f64 / self.concurrency as f64;
        let mut out = self.clone();
        out.concurrency = concurrency;
        for p in &mut out.phases {
            p.demand_read *= k;
            p.demand_write *= k;
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let w: WorkloadSpec = toml::from_str(text).map_err(|e| SimError::Workload(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("workload serializes")
    }
}

pub fn validate_objects(objects: &[DataObject]) -> Result<(), SimError> {
    let mut read = 0.0;
    let mut write = 0.0;
    for o in objects {
        for (what, v) in [("read_share", o.read_share), ("write_share", o.write_share)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::Workload(format!("object {}: {what} {v} outside [0, 1]", o.name)));
            }
        }
        read += o.read_share;
        write += o.write_share;
    }
    if read > 1.0 + 1e-9 || write > 1.0 + 1e-9 {
        return Err(SimError::Workload(format!(
            "object shares sum to read {read}, write {write}; each must be at most 1"
        )));
    }
    Ok(())
}
