//! Closed-loop HTTP workload: each worker dispatches one request, waits for
//! the last byte (or the timeout), records it, then pauses.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use aging_lab_core::series_io::RecordWriter;
use aging_lab_core::RequestRecord;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::clock::{RunClock, StopSignal};

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error("target-unreachable: {0}")]
    TargetUnreachable(String),
    #[error("invalid workload: {0}")]
    Invalid(String),
    #[error("record sink failed: {0}")]
    Sink(#[source] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    #[default]
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub target_url: String,
    pub worker_count: usize,
    pub dispatch_interval_s: f64,
    pub duration_s: f64,
    pub method: Method,
    pub body_template: Option<String>,
    pub request_timeout_s: f64,
    pub reuse_connections: bool,
}

impl WorkloadSpec {
    pub fn new(target_url: impl Into<String>) -> Self {
        Self {
            target_url: target_url.into(),
            worker_count: 10,
            dispatch_interval_s: 0.01,
            duration_s: 60.0,
            method: Method::Get,
            body_template: None,
            request_timeout_s: 10.0,
            reuse_connections: true,
        }
    }

    pub fn validate(&self) -> Result<(), DriverError> {
        let bad = |m: &str| Err(DriverError::Invalid(m.to_string()));
        if self.worker_count < 1 {
            return bad("worker-count must be at least 1");
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad("duration must be positive");
        }
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return bad("request-timeout must be positive");
        }
        if !(self.dispatch_interval_s.is_finite() && self.dispatch_interval_s >= 0.0) {
            return bad("dispatch-interval must be non-negative");
        }
        if !(self.target_url.starts_with("http://") || self.target_url.starts_with("https://")) {
            return bad("target-url must be an http:// URL");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSummary {
    pub total_requests: u64,
    pub error_count: u64,
    pub elapsed_s: f64,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
    pub achieved_rate: f64,
}

/// Consumer of request records. Appends may arrive from several workers.
pub trait RecordSink: Send + Sync {
    fn accept(&self, record: &RequestRecord) -> io::Result<()>;
    fn flush(&self) -> io::Result<()> {
        Ok(())
    }
}

/// Appends records to a CSV file as they arrive.
pub struct CsvRecordSink {
    inner: Mutex<RecordWriter<BufWriter<File>>>,
}

impl CsvRecordSink {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(Self {
            inner: Mutex::new(RecordWriter::create(path)?),
        })
    }

    pub fn written(&self) -> u64 {
        self.inner.lock().unwrap().written()
    }
}

impl RecordSink for CsvRecordSink {
    fn accept(&self, record: &RequestRecord) -> io::Result<()> {
        self.inner.lock().unwrap().push(record)
    }
    fn flush(&self) -> io::Result<()> {
        self.inner.lock().unwrap().flush()
    }
}

/// Keeps records in memory; meant for short runs and tests.
#[derive(Default)]
pub struct MemorySink(pub Mutex<Vec<RequestRecord>>);

impl MemorySink {
    pub fn take(&self) -> Vec<RequestRecord> {
        std::mem::take(&mut self.0.lock().unwrap())
    }
}

impl RecordSink for MemorySink {
    fn accept(&self, record: &RequestRecord) -> io::Result<()> {
        self.0.lock().unwrap().push(*record);
        Ok(())
    }
}

/// Discards records (warm-up traffic).
pub struct NullSink;

impl RecordSink for NullSink {
    fn accept(&self, _: &RequestRecord) -> io::Result<()> {
        Ok(())
    }
}

fn agent(timeout: Duration, reuse: bool) -> ureq::Agent {
    let mut cfg = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false);
    if !reuse {
        cfg = cfg.max_idle_connections(0).max_idle_connections_per_host(0);
    }
    cfg.build().into()
}

/// Issues one request and drains the body. Returns the status, 0 on any
/// transport failure or timeout.
fn dispatch(agent: &ureq::Agent, spec: &WorkloadSpec) -> u16 {
    let resp = match (spec.method, &spec.body_template) {
        (Method::Get, _) => agent.get(&spec.target_url).call(),
        (Method::Post, Some(body)) => agent.post(&spec.target_url).send(body.as_bytes()),
        (Method::Post, None) => agent.post(&spec.target_url).send_empty(),
    };
    match resp {
        Ok(resp) => {
            let status = resp.status().as_u16();
            let mut reader = resp.into_body().into_reader();
            match io::copy(&mut reader, &mut io::sink()) {
                Ok(_) => status,
                Err(e) => {
                    debug!("body read failed: {e}");
                    0
                }
            }
        }
        Err(e) => {
            debug!("request failed: {e}");
            0
        }
    }
}

/// True iff one request completes with a status in 1..=599 within `timeout`.
pub fn probe(url: &str, timeout: Duration) -> bool {
    let spec = WorkloadSpec {
        request_timeout_s: timeout.as_secs_f64(),
        ..WorkloadSpec::new(url)
    };
    let status = dispatch(&agent(timeout, false), &spec);
    (1..=599).contains(&status)
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    total: u64,
    errors: u64,
    latency_sum: f64,
    latency_max: f64,
}

impl Tally {
    fn add(&mut self, r: &RequestRecord) {
        self.total += 1;
        if !r.completed() || r.status >= 400 {
            self.errors += 1;
        }
        self.latency_sum += r.latency_ms;
        self.latency_max = self.latency_max.max(r.latency_ms);
    }

    fn merge(&mut self, o: &Tally) {
        self.total += o.total;
        self.errors += o.errors;
        self.latency_sum += o.latency_sum;
        self.latency_max = self.latency_max.max(o.latency_max);
    }
}

fn worker(
    id: u32,
    spec: &WorkloadSpec,
    sink: &dyn RecordSink,
    clock: &RunClock,
    deadline: Instant,
    stop: &StopSignal,
) -> Result<Tally, io::Error> {
    let agent = agent(Duration::from_secs_f64(spec.request_timeout_s), spec.reuse_connections);
    let pause = Duration::from_secs_f64(spec.dispatch_interval_s);
    let mut tally = Tally::default();
    loop {
        let start = Instant::now();
        if start >= deadline || stop.is_stopped() {
            break;
        }
        let status = dispatch(&agent, spec);
        let record = RequestRecord {
            dispatch_t: clock.seconds_at(start),
            latency_ms: start.elapsed().as_secs_f64() * 1000.0,
            status,
            worker_id: id,
        };
        sink.accept(&record)?;
        tally.add(&record);
        if pause.is_zero() {
            continue;
        }
        let wake = (Instant::now() + pause).min(deadline);
        if stop.wait_until(wake) {
            break;
        }
    }
    Ok(tally)
}

/// Runs the workload until `spec.duration_s` past the clock origin or until
/// `stop` fires. A sink failure fires `stop` so that sibling subsystems wind
/// down too; the error is returned once every worker has finished.
pub fn run_workload(
    spec: &WorkloadSpec,
    sink: &dyn RecordSink,
    clock: &RunClock,
    stop: &StopSignal,
) -> Result<WorkloadSummary, DriverError> {
    spec.validate()?;
    let probe_timeout = Duration::from_secs_f64(spec.request_timeout_s.min(10.0));
    if !probe(&spec.target_url, probe_timeout) {
        return Err(DriverError::TargetUnreachable(spec.target_url.clone()));
    }
    let deadline = clock.at(spec.duration_s);
    let results: Vec<Result<Tally, io::Error>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..spec.worker_count)
            .map(|i| {
                scope.spawn(move || {
                    let r = worker(i as u32 + 1, spec, sink, clock, deadline, stop);
                    if r.is_err() {
                        stop.stop();
                    }
                    r
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let flushed = sink.flush();
    let elapsed = clock.elapsed_s();

    let mut tally = Tally::default();
    let mut failure = None;
    for r in results {
        match r {
            Ok(t) => tally.merge(&t),
            Err(e) => failure = failure.or(Some(e)),
        }
    }
    if let Some(e) = failure.or(flushed.err()) {
        warn!("record sink failed: {e}");
        return Err(DriverError::Sink(e));
    }
    Ok(WorkloadSummary {
        total_requests: tally.total,
        error_count: tally.errors,
        elapsed_s: elapsed,
        mean_latency_ms: if tally.total > 0 { tally.latency_sum / tally.total as f64 } else { 0.0 },
        max_latency_ms: tally.latency_max,
        achieved_rate: if elapsed > 0.0 { tally.total as f64 / elapsed } else { 0.0 },
    })
}
