//! JSON report envelope shared by every subcommand.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const TOOL: &str = "nvmlens";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Serializes non-finite floats as the strings "inf", "-inf" and "nan",
/// which plain JSON cannot carry.
pub mod f64_or_inf {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected number or inf, got {other:?}"))),
            },
        }
    }
}

/// What produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    /// Flag-level overrides as `name=value`, in the order given.
    pub overrides: Vec<String>,
    pub config_file: Option<String>,
    pub out: Option<String>,
    pub seed: Option<u64>,
    /// Omitted in deterministic mode.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_unix_s: Option<u64>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs: Vec::new(),
            overrides: Vec::new(),
            config_file: None,
            out: None,
            seed: None,
            generated_unix_s: None,
        }
    }

    pub fn stamp(&mut self, deterministic: bool) {
        self.generated_unix_s = if deterministic {
            None
        } else {
            SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub report: String,
    pub manifest: RunManifest,
    pub thresholds: serde_json::Value,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(kind: &str, manifest: RunManifest, thresholds: serde_json::Value, body: T) -> Self {
        Report {
            tool: TOOL.into(),
            version: VERSION.into(),
            report: kind.into(),
            manifest,
            thresholds,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
