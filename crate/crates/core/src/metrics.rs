//! Metric time series and the aggregation operations the rest of the lab
//! consumes.
//!
//! Time is always elapsed seconds since the run's clock origin. Conversion to
//! hours happens only when rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seconds per hour, used for req/h and per-hour slope display.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    SystemMemoryUsed,
    ProcessRss,
    CpuPercent,
    IoReadBytes,
    IoWriteBytes,
    ResponseTime,
    Throughput,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::SystemMemoryUsed,
        MetricKind::ProcessRss,
        MetricKind::CpuPercent,
        MetricKind::IoReadBytes,
        MetricKind::IoWriteBytes,
        MetricKind::ResponseTime,
        MetricKind::Throughput,
    ];

    /// Kinds produced by the resource monitor, one CSV file each.
    pub const MONITORED: [MetricKind; 5] = [
        MetricKind::SystemMemoryUsed,
        MetricKind::ProcessRss,
        MetricKind::CpuPercent,
        MetricKind::IoReadBytes,
        MetricKind::IoWriteBytes,
    ];

    pub fn canonical_unit(self) -> &'static str {
        match self {
            MetricKind::SystemMemoryUsed
            | MetricKind::ProcessRss
            | MetricKind::IoReadBytes
            | MetricKind::IoWriteBytes => "bytes",
            MetricKind::CpuPercent => "percent",
            MetricKind::ResponseTime => "milliseconds",
            MetricKind::Throughput => "requests-per-hour",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::SystemMemoryUsed => "system-memory-used",
            MetricKind::ProcessRss => "process-rss",
            MetricKind::CpuPercent => "cpu-percent",
            MetricKind::IoReadBytes => "io-read-bytes",
            MetricKind::IoWriteBytes => "io-write-bytes",
            MetricKind::ResponseTime => "response-time",
            MetricKind::Throughput => "throughput",
        }
    }

    /// File name of the series CSV inside a run directory.
    pub fn file_name(self) -> String {
        format!("{}.csv", self.name().replace('-', "_"))
    }

    pub fn is_memory(self) -> bool {
        matches!(self, MetricKind::SystemMemoryUsed | MetricKind::ProcessRss)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    /// Seconds since run start.
    pub t: f64,
    pub value: f64,
}

impl MetricSample {
    pub fn new(t: f64, value: f64) -> Self {
        Self { t, value }
    }
}

/// Counts of samples refused while building a series.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarnings {
    pub non_finite: usize,
    pub out_of_order: usize,
}

impl IngestWarnings {
    pub fn total(&self) -> usize {
        self.non_finite + self.out_of_order
    }
}

/// Samples of one metric kind with strictly increasing times and finite
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    kind: MetricKind,
    run_id: String,
    samples: Vec<MetricSample>,
}

impl TimeSeries {
    pub fn empty(kind: MetricKind, run_id: impl Into<String>) -> Self {
        Self {
            kind,
            run_id: run_id.into(),
            samples: Vec::new(),
        }
    }

    /// Builds a series, failing if any invariant is violated.
    pub fn new(kind: MetricKind, run_id: impl Into<String>, samples: Vec<MetricSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !(s.t.is_finite() && s.t >= 0.0) {
                return Err(Error::InvalidSeries(format!("sample {i}: time {} is not a finite non-negative number", s.t)));
            }
            if !s.value.is_finite() {
                return Err(Error::InvalidSeries(format!("sample {i}: value {} is not finite", s.value)));
            }
            if i > 0 && samples[i - 1].t >= s.t {
                return Err(Error::InvalidSeries(format!(
                    "sample {i}: time {} does not follow {}",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(Self {
            kind,
            run_id: run_id.into(),
            samples,
        })
    }

    /// Builds a series from `(t, value)` pairs.
    pub fn from_pairs(kind: MetricKind, run_id: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(kind, run_id, pairs.iter().map(|&(t, v)| MetricSample::new(t, v)).collect())
    }

    /// Builds a series from values observed at t = 0, 1, 2, ... seconds.
    pub fn from_values(kind: MetricKind, values: &[f64]) -> Result<Self> {
        Self::new(
            kind,
            "",
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| MetricSample::new(i as f64, v))
                .collect(),
        )
    }

    /// Lenient ingestion: samples with non-finite fields or non-increasing
    /// times are refused and counted instead of failing the whole series.
    pub fn ingest(
        kind: MetricKind,
        run_id: impl Into<String>,
        samples: impl IntoIterator<Item = MetricSample>,
    ) -> (Self, IngestWarnings) {
        let mut warnings = IngestWarnings::default();
        let mut out: Vec<MetricSample> = Vec::new();
        for s in samples {
            if !(s.t.is_finite() && s.t >= 0.0 && s.value.is_finite()) {
                warnings.non_finite += 1;
                continue;
            }
            if out.last().is_some_and(|last| last.t >= s.t) {
                warnings.out_of_order += 1;
                continue;
            }
            out.push(s);
        }
        (
            Self {
                kind,
                run_id: run_id.into(),
                samples: out,
            },
            warnings,
        )
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn samples(&self) -> &[MetricSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.value).collect()
    }

    /// Applies `f` to every value. Non-finite results are rejected.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.kind,
            self.run_id.clone(),
            self.samples.iter().map(|s| MetricSample::new(s.t, f(s.value))).collect(),
        )
    }

    /// Applies `f` to every time. The result must stay strictly increasing.
    pub fn map_times(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.kind,
            self.run_id.clone(),
            self.samples.iter().map(|s| MetricSample::new(f(s.t), s.value)).collect(),
        )
    }

    /// Samples with `from <= t`, for excluding a leading interval.
    pub fn since(&self, from: f64) -> Self {
        Self {
            kind: self.kind,
            run_id: self.run_id.clone(),
            samples: self.samples.iter().copied().filter(|s| s.t >= from).collect(),
        }
    }
}

/// One completed (or failed) request as seen by the load driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    /// Seconds since run start at dispatch.
    pub dispatch_t: f64,
    pub latency_ms: f64,
    /// HTTP status, or 0 when no response arrived (connect error, timeout).
    pub status: u16,
    pub worker_id: u32,
}

impl RequestRecord {
    /// A response with any HTTP status arrived.
    pub fn completed(&self) -> bool {
        (1..=599).contains(&self.status)
    }
}

fn check_width(width: f64) -> Result<()> {
    if width.is_finite() && width > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bucket width must be > 0, got {width}")))
    }
}

fn bucket_index(t: f64, width: f64) -> u64 {
    (t / width).floor() as u64
}

/// Mean-aggregates a series into `[k*width, (k+1)*width)` buckets. Each
/// non-empty bucket yields one sample at its midpoint.
pub fn bucket_mean(series: &TimeSeries, width: f64) -> Result<TimeSeries> {
    check_width(width)?;
    let mut out = Vec::new();
    let mut current: Option<(u64, f64, usize)> = None;
    for s in series.samples() {
        let k = bucket_index(s.t, width);
        match current {
            Some((ck, sum, count)) if ck == k => current = Some((ck, sum + s.value, count + 1)),
            _ => {
                if let Some((ck, sum, count)) = current {
                    out.push(MetricSample::new((ck as f64 + 0.5) * width, sum / count as f64));
                }
                current = Some((k, s.value, 1));
            }
        }
    }
    if let Some((ck, sum, count)) = current {
        out.push(MetricSample::new((ck as f64 + 0.5) * width, sum / count as f64));
    }
    TimeSeries::new(series.kind(), series.run_id(), out)
}

/// Request counts per bucket, scaled to requests per hour. Buckets run from
/// 0 up to the last non-empty one; interior empty buckets report zero.
pub fn throughput_series(records: &[RequestRecord], width: f64) -> Result<TimeSeries> {
    check_width(width)?;
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for r in records {
        if !(r.dispatch_t.is_finite() && r.dispatch_t >= 0.0) {
            return Err(Error::InvalidArgument(format!("record dispatch time {} is invalid", r.dispatch_t)));
        }
        *counts.entry(bucket_index(r.dispatch_t, width)).or_default() += 1;
    }
    let scale = SECONDS_PER_HOUR / width;
    let samples = match counts.keys().next_back() {
        None => Vec::new(),
        Some(&last) => (0..=last)
            .map(|k| {
                let n = counts.get(&k).copied().unwrap_or(0);
                MetricSample::new((k as f64 + 0.5) * width, n as f64 * scale)
            })
            .collect(),
    };
    TimeSeries::new(MetricKind::Throughput, "", samples)
}

pub fn series_mean(series: &TimeSeries) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(series.samples().iter().map(|s| s.value).sum::<f64>() / series.len() as f64)
}

/// Per-request latency series of completed requests, ordered by dispatch
/// time. Requests dispatched at exactly the same instant are averaged into
/// one sample so the time axis stays strictly increasing.
pub fn response_time_series(records: &[RequestRecord], run_id: &str) -> TimeSeries {
    let mut points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.completed() && r.dispatch_t.is_finite() && r.latency_ms.is_finite())
        .map(|r| (r.dispatch_t, r.latency_ms))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut samples: Vec<MetricSample> = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let t = points[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < points.len() && points[j].0 == t {
            sum += points[j].1;
            j += 1;
        }
        samples.push(MetricSample::new(t, sum / (j - i) as f64));
        i = j;
    }
    TimeSeries {
        kind: MetricKind::ResponseTime,
        run_id: run_id.to_string(),
        samples,
    }
}
