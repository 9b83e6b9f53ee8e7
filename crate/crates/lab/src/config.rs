//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use aging_lab_core::DegradationProfile;
use serde::{Deserialize, Serialize};

use crate::driver::Method;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{source_name}: field `{field}`: {message}")]
    Parse {
        source_name: String,
        field: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn default_interval() -> f64 {
    0.01
}
fn default_timeout() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}
fn default_workers() -> usize {
    10
}
fn default_path() -> String {
    "/work".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    #[serde(default = "default_workers")]
    pub worker_count: usize,
    #[serde(default = "default_interval")]
    pub dispatch_interval_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub body_template: Option<String>,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
    #[serde(default = "default_true")]
    pub reuse_connections: bool,
    /// Unmeasured load before t = 0, letting allocators settle.
    #[serde(default)]
    pub warmup_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    pub sample_interval_s: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self { sample_interval_s: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub bucket_width_s: f64,
    /// Analyse per-request response times instead of bucket means.
    pub raw_response_time: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            bucket_width_s: 60.0,
            raw_response_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalTarget {
    pub url: String,
    #[serde(default)]
    pub pid: Option<u32>,
    /// Exact process name to monitor when no pid is given.
    #[serde(default)]
    pub process_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinTarget {
    #[serde(default)]
    pub profile: DegradationProfile,
    #[serde(default)]
    pub port: u16,
    #[serde(default = "default_path")]
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    External(ExternalTarget),
    Builtin(BuiltinTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    pub target: TargetConfig,
    pub output_directory: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ConfigError::Parse {
                source_name: source_name.to_string(),
                field: if field.is_empty() { ".".into() } else { field },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let w = &self.workload;
        if w.worker_count < 1 {
            return bad("workload.worker_count must be at least 1".into());
        }
        if !(w.duration_s.is_finite() && w.duration_s > 0.0) {
            return bad(format!("workload.duration_s must be positive, got {}", w.duration_s));
        }
        if !(w.dispatch_interval_s.is_finite() && w.dispatch_interval_s >= 0.0) {
            return bad("workload.dispatch_interval_s must be non-negative".into());
        }
        if !(w.request_timeout_s.is_finite() && w.request_timeout_s > 0.0) {
            return bad("workload.request_timeout_s must be positive".into());
        }
        if !(w.warmup_s.is_finite() && w.warmup_s >= 0.0) {
            return bad("workload.warmup_s must be non-negative".into());
        }
        if !(self.monitor.sample_interval_s.is_finite() && self.monitor.sample_interval_s > 0.0) {
            return bad("monitor.sample_interval_s must be positive".into());
        }
        let a = &self.analysis;
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return bad(format!("analysis.alpha must lie in (0, 1), got {}", a.alpha));
        }
        if !(a.bucket_width_s.is_finite() && a.bucket_width_s > 0.0) {
            return bad("analysis.bucket_width_s must be positive".into());
        }
        match &self.target {
            TargetConfig::External(e) => {
                if !e.url.starts_with("http://") && !e.url.starts_with("https://") {
                    return bad(format!("target.external.url must be an http:// URL, got {:?}", e.url));
                }
            }
            TargetConfig::Builtin(b) => {
                b.profile
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("target.builtin.profile: {e}")))?;
                if !b.path.starts_with('/') {
                    return bad("target.builtin.path must start with '/'".into());
                }
            }
        }
        Ok(())
    }
}
