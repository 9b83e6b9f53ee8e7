//! Ground-truth degradation model of the synthetic targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::SECONDS_PER_HOUR;

/// Fraction of the peak retained store kept after a sawtooth release.
pub const SAWTOOTH_FLOOR: f64 = 0.10;

/// Omitted fields take the [`Default`] values (5 ms base latency, no
/// degradation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationProfile {
    /// Bytes retained per handled `/work` request.
    pub leak_per_request: u64,
    pub base_latency_ms: f64,
    /// Added latency per elapsed hour of service uptime.
    pub latency_growth_ms_per_hour: f64,
    /// Standard deviation of the Gaussian jitter added to each request.
    pub latency_jitter_ms: f64,
    /// When set, the retained store drops to [`SAWTOOTH_FLOOR`] of its size
    /// once per period.
    pub sawtooth_period_s: Option<f64>,
    pub seed: u64,
}

impl Default for DegradationProfile {
    fn default() -> Self {
        Self {
            leak_per_request: 0,
            base_latency_ms: 5.0,
            latency_growth_ms_per_hour: 0.0,
            latency_jitter_ms: 0.0,
            sawtooth_period_s: None,
            seed: 0,
        }
    }
}

impl DegradationProfile {
    /// The zero-degradation profile: constant latency, nothing retained.
    pub fn constant(base_latency_ms: f64) -> Self {
        Self {
            base_latency_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_latency_ms.is_finite() && self.base_latency_ms >= 0.0) {
            return Err(Error::InvalidArgument("base latency must be >= 0".into()));
        }
        if !self.latency_growth_ms_per_hour.is_finite() {
            return Err(Error::InvalidArgument("latency growth must be finite".into()));
        }
        if !(self.latency_jitter_ms.is_finite() && self.latency_jitter_ms >= 0.0) {
            return Err(Error::InvalidArgument("latency jitter must be >= 0".into()));
        }
        if let Some(p) = self.sawtooth_period_s {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidArgument("sawtooth period must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Service time in ms at `elapsed_s` of uptime for a given jitter draw,
    /// clamped at zero.
    pub fn latency_ms(&self, elapsed_s: f64, jitter_draw_ms: f64) -> f64 {
        (self.base_latency_ms + self.latency_growth_ms_per_hour * elapsed_s / SECONDS_PER_HOUR + jitter_draw_ms).max(0.0)
    }

    /// Expected retained-memory growth in bytes per second at a sustained
    /// request rate.
    pub fn expected_memory_slope(&self, achieved_rate: f64) -> Result<f64> {
        if !(achieved_rate.is_finite() && achieved_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("rate must be >= 0, got {achieved_rate}")));
        }
        if self.sawtooth_period_s.is_some() {
            return Err(Error::NoLinearGroundTruth);
        }
        Ok(self.leak_per_request as f64 * achieved_rate)
    }

    /// Expected latency slope in ms per second.
    pub fn expected_latency_slope(&self) -> f64 {
        self.latency_growth_ms_per_hour / SECONDS_PER_HOUR
    }
}
