//! Aging report: loads a run directory, runs the trend tests on each metric
//! and renders tables, JSON and figure data.

mod manifest;
mod plot;
mod render;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bucket_mean, response_time_series, series_mean, throughput_series, MetricKind, TimeSeries, SECONDS_PER_HOUR};
use crate::series_io::{read_records, read_series};
use crate::trend::{mk_test_with, SlopeOptions, TrendResult, Verdict};

pub use manifest::{RunManifest, MANIFEST_FILE, RECORDS_FILE};
pub use plot::{emit_plot_data, render_svg, FigureFamily, PlotFiles};
pub use render::{format_ci, format_mean, format_p, format_sci, render_csv, render_table, TableStyle};

/// Memory-used definition recorded in every report header.
pub const MEMORY_DEFINITION: &str = "system-memory-used = MemTotal - MemFree - Buffers - Cached - SReclaimable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseTimePath {
    /// Mean latency per bucket.
    Bucketed,
    /// Every completed request as its own sample.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub bucket_width_s: f64,
    pub response_time: ResponseTimePath,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            bucket_width_s: 60.0,
            response_time: ResponseTimePath::Bucketed,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Analyzed,
    InsufficientData,
}

/// One line of the report, in display units (slopes per hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: MetricKind,
    pub status: RowStatus,
    pub n: usize,
    pub mean: Option<f64>,
    pub mean_unit: String,
    pub p_value: Option<f64>,
    pub slope: Option<f64>,
    pub slope_unit: String,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub verdict: Option<Verdict>,
    /// Test outcome in canonical units per second.
    pub trend: Option<TrendResult>,
}

impl MetricRow {
    pub fn verdict_label(&self) -> &'static str {
        match (self.status, self.verdict) {
            (RowStatus::Analyzed, Some(v)) => v.as_str(),
            _ => "insufficient-data",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgingReport {
    pub run_id: String,
    pub generated_at: String,
    pub alpha: f64,
    pub bucket_width_s: f64,
    pub response_time_path: ResponseTimePath,
    pub seed: u64,
    pub notes: Vec<String>,
    pub rows: Vec<MetricRow>,
}

impl AgingReport {
    pub fn row(&self, kind: MetricKind) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == kind)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Display scale and unit labels for a metric.
pub fn display_units(kind: MetricKind) -> (f64, &'static str, &'static str) {
    match kind {
        MetricKind::SystemMemoryUsed | MetricKind::ProcessRss => (1e9, "GB", "GB/h"),
        MetricKind::IoReadBytes | MetricKind::IoWriteBytes => (1e6, "MB", "MB/h"),
        MetricKind::CpuPercent => (1.0, "%", "%/h"),
        MetricKind::ResponseTime => (1.0, "ms", "ms/h"),
        MetricKind::Throughput => (1.0, "req/h", "req/h/h"),
    }
}

/// Row for one analyzed series.
pub fn analyze_series(series: &TimeSeries, alpha: f64, slope_opts: &SlopeOptions) -> Result<MetricRow> {
    let kind = series.kind();
    let (scale, mean_unit, slope_unit) = display_units(kind);
    if series.len() < 3 {
        return Ok(MetricRow {
            metric: kind,
            status: RowStatus::InsufficientData,
            n: series.len(),
            mean: series_mean(series).ok().map(|m| m / scale),
            mean_unit: mean_unit.into(),
            p_value: None,
            slope: None,
            slope_unit: slope_unit.into(),
            ci_low: None,
            ci_high: None,
            verdict: None,
            trend: None,
        });
    }
    let trend = mk_test_with(series, alpha, slope_opts)?;
    let per_hour = SECONDS_PER_HOUR / scale;
    Ok(MetricRow {
        metric: kind,
        status: RowStatus::Analyzed,
        n: series.len(),
        mean: Some(series_mean(series)? / scale),
        mean_unit: mean_unit.into(),
        p_value: Some(trend.p_value),
        slope: Some(trend.slope * per_hour),
        slope_unit: slope_unit.into(),
        ci_low: Some(trend.slope_ci_low * per_hour),
        ci_high: Some(trend.slope_ci_high * per_hour),
        verdict: Some(trend.verdict),
        trend: Some(trend),
    })
}

/// Series of a run directory, as analyzed.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub run_id: String,
    pub manifest: Option<RunManifest>,
    pub series: Vec<TimeSeries>,
    pub notes: Vec<String>,
}

impl LoadedRun {
    pub fn get(&self, kind: MetricKind) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.kind() == kind)
    }
}

/// Reads every series a run directory holds and derives the request-based
/// ones (response time, throughput) from `records.csv`.
pub fn load_run(dir: &Path, opts: &AnalysisOptions) -> Result<LoadedRun> {
    if !dir.is_dir() {
        return Err(Error::file(dir, "not a directory"));
    }
    if !(opts.bucket_width_s.is_finite() && opts.bucket_width_s > 0.0) {
        return Err(Error::InvalidArgument(format!("bucket width must be > 0, got {}", opts.bucket_width_s)));
    }
    let manifest = RunManifest::read(dir)?;
    let run_id = manifest
        .as_ref()
        .map(|m| m.run_id.clone())
        .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_default();

    let mut series = Vec::new();
    let mut notes = Vec::new();
    for kind in MetricKind::MONITORED {
        let path = dir.join(kind.file_name());
        if !path.exists() {
            continue;
        }
        let (s, warnings) = read_series(&path, kind, &run_id)?;
        if warnings.total() > 0 {
            notes.push(format!(
                "{}: ignored {} non-finite and {} out-of-order samples",
                kind, warnings.non_finite, warnings.out_of_order
            ));
        }
        series.push(s);
    }

    let records_path = dir.join(RECORDS_FILE);
    if records_path.exists() {
        let records = read_records(&records_path)?;
        let failed = records.iter().filter(|r| !r.completed()).count();
        if failed > 0 {
            notes.push(format!("records: {failed} requests without a response excluded"));
        }
        let completed: Vec<_> = records.into_iter().filter(|r| r.completed()).collect();
        let raw = response_time_series(&completed, &run_id);
        let rt = match opts.response_time {
            ResponseTimePath::Raw => raw,
            ResponseTimePath::Bucketed => bucket_mean(&raw, opts.bucket_width_s)?,
        };
        series.push(rt);

        let mut tp = throughput_series(&completed, opts.bucket_width_s)?;
        if let Some(duration) = manifest.as_ref().map(|m| m.elapsed_s.unwrap_or(m.duration_s)) {
            // A trailing partial bucket would read as a throughput drop.
            let w = opts.bucket_width_s;
            let full = (duration / w + 1e-9).floor();
            let before = tp.len();
            let kept: Vec<_> = tp.samples().iter().copied().filter(|s| (s.t / w + 0.5) <= full + 1e-9).collect();
            if kept.len() != before {
                notes.push(format!("throughput: {} trailing partial bucket(s) dropped", before - kept.len()));
            }
            tp = TimeSeries::new(MetricKind::Throughput, run_id.clone(), kept)?;
        } else {
            tp = TimeSeries::new(MetricKind::Throughput, run_id.clone(), tp.samples().to_vec())?;
        }
        series.push(tp);
    }

    if series.is_empty() {
        return Err(Error::NoSeriesFound(dir.to_path_buf()));
    }
    Ok(LoadedRun {
        run_id,
        manifest,
        series,
        notes,
    })
}

/// Full analysis of a run directory.
pub fn analyze_run(dir: &Path, opts: &AnalysisOptions) -> Result<AgingReport> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let loaded = load_run(dir, opts)?;
    let slope_opts = SlopeOptions {
        seed: opts.seed,
        ..SlopeOptions::default()
    };
    let mut rows = Vec::new();
    for kind in MetricKind::ALL {
        if let Some(s) = loaded.get(kind) {
            rows.push(analyze_series(s, opts.alpha, &slope_opts)?);
        }
    }

    let mut notes = vec![
        MEMORY_DEFINITION.to_string(),
        match opts.response_time {
            ResponseTimePath::Bucketed => format!("response-time: mean per {} s bucket", opts.bucket_width_s),
            ResponseTimePath::Raw => "response-time: raw per-request latencies".to_string(),
        },
        "slopes: Sen's estimator in display unit per hour; confidence interval at 1 - alpha".to_string(),
    ];
    if let Some(m) = &loaded.manifest {
        if m.target_exited_early {
            notes.push("target process exited before the planned duration".into());
        }
        if m.interrupted {
            notes.push("run was interrupted; partial data".into());
        }
    }
    notes.extend(loaded.notes);

    let generated_at = loaded
        .manifest
        .as_ref()
        .and_then(|m| m.finished_at.clone().or_else(|| Some(m.started_at.clone())))
        .unwrap_or_else(|| "unknown".into());

    Ok(AgingReport {
        run_id: loaded.run_id,
        generated_at,
        alpha: opts.alpha,
        bucket_width_s: opts.bucket_width_s,
        response_time_path: opts.response_time,
        seed: opts.seed,
        notes,
        rows,
    })
}

/// Output files written by [`write_report`].
pub const REPORT_FILES: [&str; 3] = ["report.txt", "report.csv", "report.json"];

pub fn write_report(report: &AgingReport, dir: &Path) -> Result<()> {
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::file(&path, e))
    };
    write("report.txt", render_table(report, TableStyle::Full))?;
    write("report.csv", render_csv(report, TableStyle::Full))?;
    write("report.json", report.to_json())
}
