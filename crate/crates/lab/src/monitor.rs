//! Fixed-cadence sampling of system and per-process resources from /proc.

use std::fs::File;
use std::io::{self, BufWriter};
use std::path::Path;
use std::time::{Duration, Instant};

use aging_lab_core::metrics::{MetricKind, MetricSample, TimeSeries};
use aging_lab_core::series_io::SeriesWriter;
use log::{debug, warn};
use procfs::process::Process;
use procfs::Current;
use serde::{Deserialize, Serialize};

use crate::clock::{RunClock, StopSignal};

#[derive(Debug, thiserror::Error)]
pub enum MonitorError {
    #[error("process-exited: pid {pid} (last snapshot at {})", fmt_last(*.last_t))]
    ProcessExited { pid: u32, last_t: Option<f64> },
    #[error("invalid monitor spec: {0}")]
    Invalid(String),
    #[error("reading process accounting failed: {0}")]
    Proc(String),
    #[error("series sink failed: {0}")]
    Sink(#[source] io::Error),
}

fn fmt_last(t: Option<f64>) -> String {
    t.map_or_else(|| "none".to_string(), |t| format!("t={t:.3}s"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSnapshot {
    pub t: f64,
    pub system_memory_used: u64,
    pub process_rss: u64,
    pub process_cpu: f64,
    pub io_read_bytes: u64,
    pub io_write_bytes: u64,
}

impl ResourceSnapshot {
    pub fn value(&self, kind: MetricKind) -> Option<f64> {
        Some(match kind {
            MetricKind::SystemMemoryUsed => self.system_memory_used as f64,
            MetricKind::ProcessRss => self.process_rss as f64,
            MetricKind::CpuPercent => self.process_cpu,
            MetricKind::IoReadBytes => self.io_read_bytes as f64,
            MetricKind::IoWriteBytes => self.io_write_bytes as f64,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub target_pid: u32,
    pub sample_interval_s: f64,
    pub duration_s: f64,
}

impl MonitorSpec {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if !(self.sample_interval_s.is_finite() && self.sample_interval_s > 0.0) {
            return Err(MonitorError::Invalid("sample-interval must be positive".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(MonitorError::Invalid("duration must be positive".into()));
        }
        Ok(())
    }
}

/// Used memory: MemTotal − MemFree − Buffers − Cached − SReclaimable.
pub fn system_memory_used() -> Result<u64, MonitorError> {
    let m = procfs::Meminfo::current().map_err(|e| MonitorError::Proc(e.to_string()))?;
    let reclaim = m.buffers + m.cached + m.s_reclaimable.unwrap_or(0);
    Ok(m.mem_total.saturating_sub(m.mem_free).saturating_sub(reclaim))
}

pub fn system_memory_total() -> Result<u64, MonitorError> {
    procfs::Meminfo::current()
        .map(|m| m.mem_total)
        .map_err(|e| MonitorError::Proc(e.to_string()))
}

/// First process whose command name equals `name` exactly.
pub fn find_pid_by_name(name: &str) -> Option<u32> {
    let own = std::process::id();
    procfs::process::all_processes().ok()?.flatten().find_map(|p| {
        let stat = p.stat().ok()?;
        (stat.comm == name && p.pid as u32 != own).then_some(p.pid as u32)
    })
}

fn uptime_s() -> Option<f64> {
    let text = std::fs::read_to_string("/proc/uptime").ok()?;
    text.split_whitespace().next()?.parse().ok()
}

struct Reading {
    at: Instant,
    rss: u64,
    cpu_ticks: u64,
    starttime_ticks: u64,
    io: Option<(u64, u64)>,
}

/// Stateful reader for one process; CPU percent comes from the change in
/// cumulative CPU time since the previous reading.
pub struct Sampler {
    pid: u32,
    process: Process,
    ticks: f64,
    page: u64,
    prev: Option<(Instant, u64)>,
    last_t: Option<f64>,
    io_unreadable: bool,
}

impl Sampler {
    pub fn new(pid: u32) -> Result<Self, MonitorError> {
        let process = Process::new(pid as i32).map_err(|_| MonitorError::ProcessExited { pid, last_t: None })?;
        Ok(Self {
            pid,
            process,
            ticks: procfs::ticks_per_second() as f64,
            page: procfs::page_size(),
            prev: None,
            last_t: None,
            io_unreadable: false,
        })
    }

    pub fn pid(&self) -> u32 {
        self.pid
    }

    /// True once /proc/<pid>/io turned out to be unreadable; I/O fields then
    /// stay at zero.
    pub fn io_unreadable(&self) -> bool {
        self.io_unreadable
    }

    fn exited(&self) -> MonitorError {
        MonitorError::ProcessExited {
            pid: self.pid,
            last_t: self.last_t,
        }
    }

    fn read(&mut self) -> Result<Reading, MonitorError> {
        let at = Instant::now();
        let stat = self.process.stat().map_err(|_| self.exited())?;
        if matches!(stat.state, 'Z' | 'X' | 'x') {
            return Err(self.exited());
        }
        let io = if self.io_unreadable {
            None
        } else {
            match self.process.io() {
                Ok(io) => Some((io.read_bytes, io.write_bytes)),
                Err(e) => {
                    warn!("pid {}: I/O counters unavailable ({e}); recording zeros", self.pid);
                    self.io_unreadable = true;
                    None
                }
            }
        };
        Ok(Reading {
            at,
            rss: stat.rss * self.page,
            cpu_ticks: stat.utime + stat.stime,
            starttime_ticks: stat.starttime,
            io,
        })
    }

    /// Takes a reading without producing a snapshot; primes the CPU delta.
    pub fn prime(&mut self) -> Result<(), MonitorError> {
        let r = self.read()?;
        self.prev = Some((r.at, r.cpu_ticks));
        Ok(())
    }

    /// One snapshot. Without a prior reading, CPU percent is the lifetime
    /// average of the process.
    pub fn sample(&mut self, clock: &RunClock) -> Result<ResourceSnapshot, MonitorError> {
        let r = self.read()?;
        let cpu_s = r.cpu_ticks as f64 / self.ticks;
        let process_cpu = match self.prev {
            Some((at, ticks)) => {
                let wall = r.at.saturating_duration_since(at).as_secs_f64();
                let used = r.cpu_ticks.saturating_sub(ticks) as f64 / self.ticks;
                if wall > 0.0 { 100.0 * used / wall } else { 0.0 }
            }
            None => {
                let age = uptime_s().map(|u| u - r.starttime_ticks as f64 / self.ticks).unwrap_or(0.0);
                if age > 0.0 { 100.0 * cpu_s / age } else { 0.0 }
            }
        };
        self.prev = Some((r.at, r.cpu_ticks));
        let (io_read_bytes, io_write_bytes) = r.io.unwrap_or((0, 0));
        let t = clock.seconds_at(r.at);
        self.last_t = Some(t);
        Ok(ResourceSnapshot {
            t,
            system_memory_used: system_memory_used()?,
            process_rss: r.rss,
            process_cpu,
            io_read_bytes,
            io_write_bytes,
        })
    }
}

/// One-off snapshot of `pid` on `clock`'s time axis.
pub fn sample(pid: u32, clock: &RunClock) -> Result<ResourceSnapshot, MonitorError> {
    Sampler::new(pid)?.sample(clock)
}

/// Consumer of snapshots, one call per sampling instant.
pub trait SnapshotSink {
    fn accept(&mut self, s: &ResourceSnapshot) -> io::Result<()>;
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Appends each metric to its own `t_seconds,value` file.
pub struct CsvSeriesSink {
    writers: Vec<(MetricKind, SeriesWriter<BufWriter<File>>)>,
}

impl CsvSeriesSink {
    pub fn create(dir: &Path) -> io::Result<Self> {
        let writers = MetricKind::MONITORED
            .iter()
            .map(|&k| Ok((k, SeriesWriter::create(&dir.join(k.file_name()))?)))
            .collect::<io::Result<_>>()?;
        Ok(Self { writers })
    }
}

impl SnapshotSink for CsvSeriesSink {
    fn accept(&mut self, s: &ResourceSnapshot) -> io::Result<()> {
        for (kind, w) in &mut self.writers {
            let value = s.value(*kind).unwrap_or(f64::NAN);
            if !w.push(MetricSample { t: s.t, value })? {
                debug!("{kind}: dropped sample at t={}", s.t);
            }
            // Keep the files usable if the run is killed.
            w.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.writers.iter_mut().try_for_each(|(_, w)| w.flush())
    }
}

/// Holds snapshots in memory.
#[derive(Debug, Default)]
pub struct MemorySnapshotSink {
    pub snapshots: Vec<ResourceSnapshot>,
}

impl MemorySnapshotSink {
    pub fn series(&self, kind: MetricKind) -> aging_lab_core::Result<TimeSeries> {
        let pairs: Vec<(f64, f64)> = self
            .snapshots
            .iter()
            .filter_map(|s| s.value(kind).map(|v| (s.t, v)))
            .collect();
        TimeSeries::from_pairs(kind, "", &pairs)
    }
}

impl SnapshotSink for MemorySnapshotSink {
    fn accept(&mut self, s: &ResourceSnapshot) -> io::Result<()> {
        self.snapshots.push(*s);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub snapshots: u64,
    pub target_exited_early: bool,
    pub io_counters_unreadable: bool,
    /// CPU time consumed by the sampling thread itself.
    pub monitor_cpu_s: f64,
    pub monitor_wall_s: f64,
    /// Gaps between consecutive snapshots, and how many of them stayed within
    /// a quarter interval of the cadence.
    pub gaps: u64,
    pub gaps_on_cadence: u64,
    pub max_gap_s: f64,
}

impl MonitorOutcome {
    /// Fraction of one core used by the monitor.
    pub fn cpu_fraction(&self) -> f64 {
        if self.monitor_wall_s > 0.0 {
            self.monitor_cpu_s / self.monitor_wall_s
        } else {
            0.0
        }
    }
}

/// CPU time of the calling thread.
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: ts is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return Duration::ZERO;
    }
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}

/// Samples `spec.target_pid` at t = k·interval (k = 1, 2, …) on the run
/// clock until `spec.duration_s`, `stop`, or process exit. An early exit is
/// reported in the outcome, not as an error.
pub fn monitor_loop(
    spec: &MonitorSpec,
    sink: &mut dyn SnapshotSink,
    clock: &RunClock,
    stop: &StopSignal,
) -> Result<MonitorOutcome, MonitorError> {
    spec.validate()?;
    let cpu0 = thread_cpu_time();
    let wall0 = Instant::now();
    let mut sampler = Sampler::new(spec.target_pid)?;
    sampler.prime()?;

    let mut out = MonitorOutcome::default();
    let interval = spec.sample_interval_s;
    let steps = (spec.duration_s / interval + 1e-9).floor() as u64;
    // Schedule relative to the clock so a late start does not shift the grid.
    let mut k = ((clock.elapsed_s() / interval).floor() as u64 + 1).max(1);
    let mut prev_t: Option<f64> = None;
    while k <= steps {
        if stop.wait_until(clock.at(k as f64 * interval)) {
            break;
        }
        let snap = match sampler.sample(clock) {
            Ok(s) => s,
            Err(MonitorError::ProcessExited { .. }) => {
                out.target_exited_early = true;
                break;
            }
            Err(e) => return Err(e),
        };
        sink.accept(&snap).map_err(MonitorError::Sink)?;
        out.snapshots += 1;
        if let Some(p) = prev_t {
            let gap = snap.t - p;
            out.gaps += 1;
            if (gap - interval).abs() <= 0.25 * interval {
                out.gaps_on_cadence += 1;
            }
            out.max_gap_s = out.max_gap_s.max(gap);
        }
        prev_t = Some(snap.t);
        // Skip grid points already in the past after a stall.
        k = (k + 1).max((clock.elapsed_s() / interval).floor() as u64 + 1);
    }
    sink.flush().map_err(MonitorError::Sink)?;
    out.io_counters_unreadable = sampler.io_unreadable();
    out.monitor_cpu_s = (thread_cpu_time() - cpu0).as_secs_f64();
    out.monitor_wall_s = wall0.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn used_memory_is_below_total() {
        let used = system_memory_used().unwrap();
        assert!(used > 0 && used <= system_memory_total().unwrap());
    }

    #[test]
    fn thread_cpu_time_advances() {
        let a = thread_cpu_time();
        let mut x = 0u64;
        for i in 0..5_000_000u64 {
            x = x.wrapping_mul(31).wrapping_add(i);
        }
        std::hint::black_box(x);
        assert!(thread_cpu_time() > a);
    }
}
