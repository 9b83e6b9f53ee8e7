//! Wires target, driver, monitor and report into run / analyze / full /
//! selftest commands.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use aging_lab_core::metrics::MetricKind;
use aging_lab_core::report::{
    analyze_run, emit_plot_data, format_p, render_table, write_report, AgingReport, AnalysisOptions,
    ResponseTimePath, RowStatus, RunManifest, TableStyle, MEMORY_DEFINITION, RECORDS_FILE,
};
use aging_lab_core::series_io::SeriesWriter;
use aging_lab_core::{DegradationProfile, Verdict};
use log::{info, warn};
use serde_json::json;

use crate::clock::{RunClock, StopSignal};
use crate::config::{BuiltinTarget, ConfigError, RunConfig, TargetConfig};
use crate::driver::{self, CsvRecordSink, DriverError, NullSink, WorkloadSpec, WorkloadSummary};
use crate::monitor::{monitor_loop, CsvSeriesSink, MonitorError, MonitorOutcome, MonitorSpec};

pub const TOOL: &str = "aging-lab";
pub const SELFTEST_FILE: &str = "selftest.json";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("target-unreachable: {0}")]
    Unreachable(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("analysis failed: {0}")]
    Analysis(#[from] aging_lab_core::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Analysis(_) => 2,
            RunError::Unreachable(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn io_err(what: impl std::fmt::Display, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{what}: {e}"))
}

/// Flag values layered on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_directory: Option<PathBuf>,
    pub duration_s: Option<f64>,
    pub worker_count: Option<usize>,
    pub dispatch_interval_s: Option<f64>,
    pub warmup_s: Option<f64>,
    pub sample_interval_s: Option<f64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub bucket_width_s: Option<f64>,
    pub raw_response_time: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        if let Some(v) = &self.output_directory {
            cfg.output_directory = v.clone();
        }
        if let Some(v) = self.duration_s {
            cfg.workload.duration_s = v;
        }
        if let Some(v) = self.worker_count {
            cfg.workload.worker_count = v;
        }
        if let Some(v) = self.dispatch_interval_s {
            cfg.workload.dispatch_interval_s = v;
        }
        if let Some(v) = self.warmup_s {
            cfg.workload.warmup_s = v;
        }
        if let Some(v) = self.sample_interval_s {
            cfg.monitor.sample_interval_s = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.alpha {
            cfg.analysis.alpha = v;
        }
        if let Some(v) = self.bucket_width_s {
            cfg.analysis.bucket_width_s = v;
        }
        if self.raw_response_time {
            cfg.analysis.raw_response_time = true;
        }
        cfg.validate()
    }
}

/// Process-level context for a run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Executable that provides the `target` subcommand for builtin targets.
    pub exe: PathBuf,
    pub stop: StopSignal,
    /// Set by the interrupt handler before it fires `stop`.
    pub interrupted: Arc<AtomicBool>,
    /// Monitor this process instead of the target (harness self-test).
    pub monitor_self: bool,
}

impl RunOptions {
    pub fn new(exe: PathBuf) -> Self {
        Self {
            exe,
            stop: StopSignal::new(),
            interrupted: Arc::new(AtomicBool::new(false)),
            monitor_self: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: WorkloadSummary,
    pub monitor: Option<MonitorOutcome>,
}

/// A builtin target running as a child process; terminated on drop.
pub struct SpawnedTarget {
    child: Child,
    _stdout: BufReader<ChildStdout>,
    pub base_url: String,
    pub pid: u32,
}

impl SpawnedTarget {
    pub fn spawn(exe: &Path, profile: &DegradationProfile, port: u16) -> Result<Self, RunError> {
        let mut cmd = Command::new(exe);
        cmd.arg("target")
            .args(["--host", "127.0.0.1", "--port", &port.to_string()])
            .args(["--leak-bytes", &profile.leak_per_request.to_string()])
            .args(["--base-latency-ms", &profile.base_latency_ms.to_string()])
            .args(["--latency-growth-ms-per-hour", &profile.latency_growth_ms_per_hour.to_string()])
            .args(["--jitter-ms", &profile.latency_jitter_ms.to_string()])
            .args(["--seed", &profile.seed.to_string()]);
        if let Some(p) = profile.sawtooth_period_s {
            cmd.args(["--sawtooth-period", &p.to_string()]);
        }
        let mut child = cmd
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| RunError::Unreachable(format!("cannot start builtin target via {}: {e}", exe.display())))?;
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut banner = String::new();
        let read = stdout.read_line(&mut banner);
        let parsed = read.ok().and_then(|_| parse_banner(&banner));
        match parsed {
            Some((base_url, pid)) => Ok(Self {
                child,
                _stdout: stdout,
                base_url,
                pid,
            }),
            None => {
                let status = child.wait().ok();
                Err(RunError::Unreachable(format!(
                    "builtin target did not start (exit status {})",
                    status.map_or("unknown".into(), |s| s.to_string())
                )))
            }
        }
    }
}

impl Drop for SpawnedTarget {
    fn drop(&mut self) {
        // SAFETY: plain signal delivery to our own child.
        unsafe {
            libc::kill(self.child.id() as libc::pid_t, libc::SIGTERM);
        }
        let deadline = Instant::now() + Duration::from_secs(5);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Parses `serving <url> pid <pid> state <url>`.
pub fn parse_banner(line: &str) -> Option<(String, u32)> {
    let mut it = line.split_whitespace();
    if it.next()? != "serving" {
        return None;
    }
    let url = it.next()?.to_string();
    if it.next()? != "pid" {
        return None;
    }
    let pid = it.next()?.parse().ok()?;
    Some((url, pid))
}

pub fn banner(base_url: &str, pid: u32) -> String {
    format!("serving {base_url} pid {pid} state {base_url}/debug/state")
}

fn wait_reachable(url: &str, patience: Duration) -> bool {
    let deadline = Instant::now() + patience;
    loop {
        if driver::probe(url, Duration::from_secs(2)) {
            return true;
        }
        if Instant::now() >= deadline {
            return false;
        }
        thread::sleep(Duration::from_millis(100));
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn run_id_of(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

pub fn analysis_options(cfg: &RunConfig) -> AnalysisOptions {
    AnalysisOptions {
        alpha: cfg.analysis.alpha,
        bucket_width_s: cfg.analysis.bucket_width_s,
        response_time: if cfg.analysis.raw_response_time {
            ResponseTimePath::Raw
        } else {
            ResponseTimePath::Bucketed
        },
        seed: cfg.seed,
    }
}

/// Creates header-only series files so analysis reports the rows as
/// lacking data instead of silently dropping them.
fn write_empty_series(dir: &Path) -> Result<(), RunError> {
    for kind in MetricKind::MONITORED {
        let path = dir.join(kind.file_name());
        let mut w = SeriesWriter::create(&path).map_err(|e| io_err(path.display(), e))?;
        w.flush().map_err(|e| io_err(path.display(), e))?;
    }
    Ok(())
}

/// Starts the target if needed, then the monitor and the workload on one
/// clock. Writes records, series and the manifest under the output
/// directory.
pub fn cmd_run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let dir = cfg.output_directory.clone();
    std::fs::create_dir_all(&dir).map_err(|e| io_err(dir.display(), e))?;

    let mut spawned = None;
    let (url, target_pid) = match &cfg.target {
        TargetConfig::Builtin(BuiltinTarget { profile, port, path }) => {
            let mut profile = profile.clone();
            if profile.seed == 0 {
                profile.seed = cfg.seed;
            }
            let t = SpawnedTarget::spawn(&opts.exe, &profile, *port)?;
            info!("builtin target pid {} at {}", t.pid, t.base_url);
            let out = (format!("{}{}", t.base_url, path), Some(t.pid));
            spawned = Some(t);
            out
        }
        TargetConfig::External(e) => {
            let pid = e.pid.or_else(|| {
                let name = e.process_name.as_deref()?;
                let found = crate::monitor::find_pid_by_name(name);
                if found.is_none() {
                    warn!("no process named {name:?}; resources will not be monitored");
                }
                found
            });
            (e.url.clone(), pid)
        }
    };
    if !wait_reachable(&url, Duration::from_secs(10)) {
        return Err(RunError::Unreachable(url));
    }
    let monitored_pid = if opts.monitor_self { Some(std::process::id()) } else { target_pid };

    let spec = WorkloadSpec {
        target_url: url.clone(),
        worker_count: cfg.workload.worker_count,
        dispatch_interval_s: cfg.workload.dispatch_interval_s,
        duration_s: cfg.workload.duration_s,
        method: cfg.workload.method,
        body_template: cfg.workload.body_template.clone(),
        request_timeout_s: cfg.workload.request_timeout_s,
        reuse_connections: cfg.workload.reuse_connections,
    };

    if cfg.workload.warmup_s > 0.0 {
        info!("warm-up for {} s", cfg.workload.warmup_s);
        let warm = WorkloadSpec {
            duration_s: cfg.workload.warmup_s,
            ..spec.clone()
        };
        driver::run_workload(&warm, &NullSink, &RunClock::start(), &opts.stop).map_err(driver_error)?;
    }

    let clock = RunClock::start();
    let mut manifest = RunManifest {
        tool: TOOL.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        run_id: run_id_of(&dir),
        seed: cfg.seed,
        duration_s: cfg.workload.duration_s,
        elapsed_s: None,
        clock_origin_unix_ms: clock.origin_unix_ms(),
        started_at: now_rfc3339(),
        finished_at: None,
        target_pid,
        monitored_pid,
        memory_definition: Some(MEMORY_DEFINITION.into()),
        target_exited_early: false,
        interrupted: false,
        config: serde_json::to_value(cfg).unwrap_or_default(),
        summary: serde_json::Value::Null,
        monitor: serde_json::Value::Null,
    };
    manifest.write(&dir).map_err(|e| RunError::Io(e.to_string()))?;

    let records_path = dir.join(RECORDS_FILE);
    let sink = CsvRecordSink::create(&records_path).map_err(|e| io_err(records_path.display(), e))?;

    let monitor_handle = match monitored_pid {
        Some(pid) => {
            let mut series_sink = CsvSeriesSink::create(&dir).map_err(|e| io_err(dir.display(), e))?;
            let mspec = MonitorSpec {
                target_pid: pid,
                sample_interval_s: cfg.monitor.sample_interval_s,
                duration_s: cfg.workload.duration_s,
            };
            let stop = opts.stop.clone();
            let handle = thread::Builder::new()
                .name("monitor".into())
                .spawn(move || {
                    let r = monitor_loop(&mspec, &mut series_sink, &clock, &stop);
                    match &r {
                        Ok(o) if o.target_exited_early => {
                            warn!("monitored process exited early; stopping the run");
                            stop.stop();
                        }
                        Err(e) => {
                            warn!("monitor failed: {e}");
                            stop.stop();
                        }
                        _ => {}
                    }
                    r
                })
                .map_err(|e| io_err("monitor thread", e))?;
            Some(handle)
        }
        None => {
            warn!("no pid for the target; memory, CPU and I/O series stay empty");
            write_empty_series(&dir)?;
            None
        }
    };

    let driven = driver::run_workload(&spec, &sink, &clock, &opts.stop);
    if driven.is_err() {
        opts.stop.stop();
    }
    let monitored = monitor_handle.map(|h| h.join().expect("monitor thread panicked"));
    drop(spawned);

    let interrupted = opts.interrupted.load(Ordering::SeqCst);
    let mut failure: Option<RunError> = None;
    let summary = match driven {
        Ok(s) => Some(s),
        Err(e) => {
            failure = Some(driver_error(e));
            None
        }
    };
    let monitor = match monitored {
        Some(Ok(o)) => Some(o),
        Some(Err(e)) => {
            failure = failure.or(Some(monitor_error(e)));
            None
        }
        None => None,
    };

    manifest.elapsed_s = Some(summary.as_ref().map_or(clock.elapsed_s(), |s| s.elapsed_s));
    manifest.finished_at = Some(now_rfc3339());
    manifest.interrupted = interrupted;
    manifest.target_exited_early = monitor.as_ref().is_some_and(|m| m.target_exited_early);
    manifest.summary = summary.as_ref().map_or(serde_json::Value::Null, |s| json!(s));
    manifest.monitor = monitor.as_ref().map_or(serde_json::Value::Null, |m| json!(m));
    let written = manifest.write(&dir);
    if let Some(e) = failure {
        return Err(e);
    }
    written.map_err(|e| RunError::Io(e.to_string()))?;
    let summary = summary.expect("summary present without failure");
    info!(
        "run finished: {} requests ({} errors), {:.1} req/s",
        summary.total_requests, summary.error_count, summary.achieved_rate
    );
    Ok(RunOutcome {
        dir,
        manifest,
        summary,
        monitor,
    })
}

fn driver_error(e: DriverError) -> RunError {
    match e {
        DriverError::TargetUnreachable(u) => RunError::Unreachable(u),
        DriverError::Invalid(m) => RunError::Config(m),
        DriverError::Sink(e) => io_err(RECORDS_FILE, e),
    }
}

fn monitor_error(e: MonitorError) -> RunError {
    match e {
        MonitorError::Sink(e) => io_err("series files", e),
        MonitorError::Invalid(m) => RunError::Config(m),
        other => RunError::Io(other.to_string()),
    }
}

/// Analyses a run directory, writes the report artefacts and figures, and
/// returns the report with its table in `style`.
pub fn cmd_analyze(dir: &Path, opts: &AnalysisOptions, style: TableStyle) -> Result<(AgingReport, String), RunError> {
    let report = analyze_run(dir, opts)?;
    write_report(&report, dir).map_err(|e| RunError::Io(e.to_string()))?;
    emit_plot_data(&report, dir).map_err(|e| RunError::Io(e.to_string()))?;
    let table = render_table(&report, style);
    Ok((report, table))
}

/// One line per row, e.g. `process-rss: increasing (p<0.05)`.
pub fn verdict_lines(report: &AgingReport) -> Vec<String> {
    report
        .rows
        .iter()
        .map(|r| match (r.status, r.verdict, r.p_value) {
            (RowStatus::InsufficientData, _, _) => format!("{}: insufficient-data", r.metric),
            (_, Some(v), _) if v != Verdict::NoTrend => {
                format!("{}: {} (p<{})", r.metric, v.as_str(), report.alpha)
            }
            (_, _, Some(p)) => format!("{}: no-trend (p={})", r.metric, format_p(p)),
            _ => format!("{}: no-trend", r.metric),
        })
        .collect()
}

pub struct FullOutcome {
    pub run: RunOutcome,
    pub report: AgingReport,
    pub table: String,
}

/// Run, then analyse what was collected.
pub fn cmd_full(cfg: &RunConfig, opts: &RunOptions) -> Result<FullOutcome, RunError> {
    let run = cmd_run(cfg, opts)?;
    let (report, table) = cmd_analyze(&run.dir, &analysis_options(cfg), TableStyle::PaperTable3)?;
    Ok(FullOutcome { run, report, table })
}

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    pub output_directory: PathBuf,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub worker_count: usize,
    pub dispatch_interval_s: f64,
    pub sample_interval_s: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self {
            output_directory: PathBuf::from("selftest-run"),
            duration_s: 1800.0,
            warmup_s: 30.0,
            worker_count: 4,
            dispatch_interval_s: 0.05,
            sample_interval_s: 1.0,
            alpha: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SelftestReport {
    pub rss_verdict: String,
    pub rss_p_value: Option<f64>,
    pub rss_slope_bytes_per_hour: Option<f64>,
    pub monitor_cpu_fraction: f64,
    pub snapshots: u64,
    pub gaps_on_cadence_fraction: f64,
    pub requests: u64,
    pub passed: bool,
}

/// Drives a constant target while monitoring this process, then checks the
/// harness's own RSS for a trend and the monitor's CPU cost.
pub fn cmd_selftest(st: &SelftestOptions, opts: &RunOptions) -> Result<SelftestReport, RunError> {
    let cfg = RunConfig {
        workload: crate::config::WorkloadConfig {
            worker_count: st.worker_count,
            dispatch_interval_s: st.dispatch_interval_s,
            duration_s: st.duration_s,
            method: Default::default(),
            body_template: None,
            request_timeout_s: 10.0,
            reuse_connections: true,
            warmup_s: st.warmup_s,
        },
        monitor: crate::config::MonitorConfig {
            sample_interval_s: st.sample_interval_s,
        },
        analysis: crate::config::AnalysisConfig {
            alpha: st.alpha,
            ..Default::default()
        },
        target: TargetConfig::Builtin(BuiltinTarget {
            profile: DegradationProfile::constant(5.0),
            port: 0,
            path: "/work".into(),
        }),
        output_directory: st.output_directory.clone(),
        seed: st.seed,
    };
    let opts = RunOptions {
        monitor_self: true,
        ..opts.clone()
    };
    let run = cmd_run(&cfg, &opts)?;
    let report = analyze_run(&run.dir, &analysis_options(&cfg))?;
    let row = report.row(MetricKind::ProcessRss);
    let monitor = run.monitor.clone().unwrap_or_default();
    let verdict = row.map_or("insufficient-data", |r| r.verdict_label()).to_string();
    let cpu = monitor.cpu_fraction();
    let out = SelftestReport {
        passed: row.is_some_and(|r| r.verdict != Some(Verdict::Increasing)) && cpu < 0.02,
        rss_verdict: verdict,
        rss_p_value: row.and_then(|r| r.p_value),
        rss_slope_bytes_per_hour: row.and_then(|r| r.trend.as_ref()).map(|t| t.slope * 3600.0),
        monitor_cpu_fraction: cpu,
        snapshots: monitor.snapshots,
        gaps_on_cadence_fraction: if monitor.gaps > 0 {
            monitor.gaps_on_cadence as f64 / monitor.gaps as f64
        } else {
            0.0
        },
        requests: run.summary.total_requests,
    };
    let path = run.dir.join(SELFTEST_FILE);
    let mut f = std::fs::File::create(&path).map_err(|e| io_err(path.display(), e))?;
    writeln!(f, "{}", serde_json::to_string_pretty(&out).unwrap_or_default()).map_err(|e| io_err(path.display(), e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banner_round_trips() {
        let b = banner("http://127.0.0.1:4000", 77);
        assert_eq!(parse_banner(&b), Some(("http://127.0.0.1:4000".into(), 77)));
        assert_eq!(parse_banner("listening somewhere"), None);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::from_json(
            r#"{"workload": {"duration_s": 5}, "target": {"builtin": {}}, "output_directory": "o", "seed": 1}"#,
            "t",
        )
        .unwrap();
        let o = Overrides {
            seed: Some(9),
            duration_s: Some(2.0),
            alpha: Some(0.01),
            ..Default::default()
        };
        o.apply(&mut cfg).unwrap();
        assert_eq!((cfg.seed, cfg.workload.duration_s, cfg.analysis.alpha), (9, 2.0, 0.01));
        let bad = Overrides {
            alpha: Some(2.0),
            ..Default::default()
        };
        assert!(bad.apply(&mut cfg).is_err());
    }
}
