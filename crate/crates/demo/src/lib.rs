//! Browser playground for the trend statistics. The `#[wasm_bindgen]`
//! exports are thin wrappers over plain functions that return JSON text, so
//! everything here is also testable natively.

use aging_lab_core::metrics::{MetricKind, TimeSeries};
use aging_lab_core::profile::SAWTOOTH_FLOOR;
use aging_lab_core::trend::{exact_mk_p, mk_test, TrendResult};
use aging_lab_core::DegradationProfile;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Analysis {
    trend: TrendResult,
    /// Permutation p-value, only for tie-free series of at most 10 points.
    exact_p: Option<f64>,
}

/// Mann-Kendall and Sen's slope on explicit samples. Empty `times` means
/// 0, 1, 2, ...
pub fn analyze_json(times: &[f64], values: &[f64], alpha: f64) -> Result<String, String> {
    let series = if times.is_empty() {
        TimeSeries::from_values(MetricKind::ResponseTime, values)
    } else {
        if times.len() != values.len() {
            return Err(format!("{} times but {} values", times.len(), values.len()));
        }
        let pairs: Vec<(f64, f64)> = times.iter().copied().zip(values.iter().copied()).collect();
        TimeSeries::from_pairs(MetricKind::ResponseTime, "demo", &pairs)
    }
    .map_err(|e| e.to_string())?;
    let trend = mk_test(&series, alpha).map_err(|e| e.to_string())?;
    let out = Analysis {
        trend,
        exact_p: exact_mk_p(&series).ok(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Simulated {
    t: Vec<f64>,
    rss: Vec<f64>,
    latency: Vec<f64>,
    rss_trend: TrendResult,
    latency_trend: TrendResult,
    /// Bytes per second; absent for sawtooth profiles.
    expected_memory_slope: Option<f64>,
    /// Milliseconds per second.
    expected_latency_slope: f64,
}

/// Samples a synthetic target's memory and latency on a fixed cadence:
/// memory grows by `leak × rate` per second (dropping to the floor each
/// sawtooth period) with Gaussian measurement noise, latency follows the
/// profile with its own jitter.
pub fn simulate_json(
    profile_json: &str,
    rate: f64,
    duration_s: f64,
    interval_s: f64,
    memory_noise_bytes: f64,
    alpha: f64,
) -> Result<String, String> {
    let profile: DegradationProfile = serde_json::from_str(profile_json).map_err(|e| e.to_string())?;
    profile.validate().map_err(|e| e.to_string())?;
    if !(rate >= 0.0 && duration_s > 0.0 && interval_s > 0.0 && memory_noise_bytes >= 0.0) {
        return Err("rate, duration, interval and noise must be non-negative (duration, interval > 0)".into());
    }
    let n = (duration_s / interval_s).floor() as usize;
    if n < 3 {
        return Err("need at least 3 samples".into());
    }
    if n > 200_000 {
        return Err("at most 200000 samples".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let mem_noise = Normal::new(0.0, memory_noise_bytes).map_err(|e| e.to_string())?;
    let jitter = Normal::new(0.0, profile.latency_jitter_ms).map_err(|e| e.to_string())?;

    let base_rss = 50e6;
    let per_s = profile.leak_per_request as f64 * rate;
    let mut retained = 0.0;
    let mut next_release = profile.sawtooth_period_s;
    let (mut t, mut rss, mut latency) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 1..=n {
        let now = k as f64 * interval_s;
        retained += per_s * interval_s;
        if let (Some(period), Some(at)) = (profile.sawtooth_period_s, next_release) {
            if now >= at {
                retained *= SAWTOOTH_FLOOR;
                next_release = Some(at + period);
            }
        }
        t.push(now);
        rss.push((base_rss + retained + mem_noise.sample(&mut rng)).max(0.0));
        latency.push(profile.latency_ms(now, jitter.sample(&mut rng)));
    }
    let rss_trend = mk_test(&series(MetricKind::ProcessRss, &t, &rss)?, alpha).map_err(|e| e.to_string())?;
    let latency_trend = mk_test(&series(MetricKind::ResponseTime, &t, &latency)?, alpha).map_err(|e| e.to_string())?;
    let out = Simulated {
        expected_memory_slope: profile.expected_memory_slope(rate).ok(),
        expected_latency_slope: profile.expected_latency_slope(),
        t,
        rss,
        latency,
        rss_trend,
        latency_trend,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn series(kind: MetricKind, t: &[f64], v: &[f64]) -> Result<TimeSeries, String> {
    let pairs: Vec<(f64, f64)> = t.iter().copied().zip(v.iter().copied()).collect();
    TimeSeries::from_pairs(kind, "demo", &pairs).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Calibration {
    trials: usize,
    rejections: usize,
    rejection_rate: f64,
    /// Counts of p-values in ten equal bins over [0, 1].
    p_histogram: [usize; 10],
}

/// False-positive rate of the test on white noise of length `n`.
pub fn calibrate_json(n: usize, trials: usize, alpha: f64, seed: u64) -> Result<String, String> {
    if !(3..=5000).contains(&n) || !(1..=20_000).contains(&trials) {
        return Err("need 3 <= n <= 5000 and 1 <= trials <= 20000".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).map_err(|e| e.to_string())?;
    let mut hist = [0usize; 10];
    let mut rejections = 0;
    let mut v = vec![0.0; n];
    for _ in 0..trials {
        v.iter_mut().for_each(|x| *x = noise.sample(&mut rng));
        let s = TimeSeries::from_values(MetricKind::ResponseTime, &v).map_err(|e| e.to_string())?;
        let p = mk_test(&s, alpha).map_err(|e| e.to_string())?.p_value;
        if p < alpha {
            rejections += 1;
        }
        hist[((p * 10.0) as usize).min(9)] += 1;
    }
    let out = Calibration {
        trials,
        rejections,
        rejection_rate: rejections as f64 / trials as f64,
        p_histogram: hist,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn analyze(times: Vec<f64>, values: Vec<f64>, alpha: f64) -> Result<String, JsValue> {
    analyze_json(&times, &values, alpha).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(
    profile_json: &str,
    rate: f64,
    duration_s: f64,
    interval_s: f64,
    memory_noise_bytes: f64,
    alpha: f64,
) -> Result<String, JsValue> {
    simulate_json(profile_json, rate, duration_s, interval_s, memory_noise_bytes, alpha).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn calibrate(n: usize, trials: usize, alpha: f64, seed: u64) -> Result<String, JsValue> {
    calibrate_json(n, trials, alpha, seed).map_err(|e| JsValue::from_str(&e))
}
