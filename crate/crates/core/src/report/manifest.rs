use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "run-manifest.json";
pub const RECORDS_FILE: &str = "records.csv";

/// Self-description written next to a run's telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub run_id: String,
    pub seed: u64,
    /// Planned duration of the measured interval.
    pub duration_s: f64,
    /// Actual measured interval, when the run finished.
    #[serde(default)]
    pub elapsed_s: Option<f64>,
    /// Wall-clock instant of t = 0, milliseconds since the Unix epoch.
    pub clock_origin_unix_ms: u64,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
    #[serde(default)]
    pub target_pid: Option<u32>,
    #[serde(default)]
    pub monitored_pid: Option<u32>,
    #[serde(default)]
    pub memory_definition: Option<String>,
    #[serde(default)]
    pub target_exited_early: bool,
    #[serde(default)]
    pub interrupted: bool,
    /// The configuration the run was started with.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub summary: serde_json::Value,
    #[serde(default)]
    pub monitor: serde_json::Value,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::file(&path, e))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::file(&path, e))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
    }
}
