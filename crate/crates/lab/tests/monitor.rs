mod common;

use std::time::Duration;

use aging_lab::monitor::{monitor_loop, sample, system_memory_total, MemorySnapshotSink, MonitorError, MonitorSpec, Sampler};
use aging_lab::{RunClock, StopSignal};
use aging_lab_core::metrics::MetricKind;
use aging_lab_core::trend::mk_test;
use aging_lab_core::Verdict;
use common::{lab, Proc};

fn stub(args: &[&str]) -> Proc {
    let mut c = lab();
    c.arg("stub").args(args);
    Proc::spawn(c)
}

#[test]
fn self_sample_is_sane() {
    let clock = RunClock::start();
    let s = sample(std::process::id(), &clock).unwrap();
    assert!(s.process_rss > 0);
    assert!(s.process_rss <= system_memory_total().unwrap());
    assert!(s.system_memory_used > 0);
    assert!(s.process_cpu >= 0.0);
    assert!(s.t >= 0.0);
}

#[test]
fn nonexistent_pid_reports_exit() {
    let mut c = lab();
    c.arg("--version");
    let mut p = Proc::spawn(c);
    let pid = p.pid();
    p.child.wait().unwrap();
    let r = sample(pid, &RunClock::start());
    assert!(matches!(r, Err(MonitorError::ProcessExited { .. })), "{r:?}");
    assert!(r.unwrap_err().to_string().starts_with("process-exited"));
}

#[test]
fn retained_allocation_shows_in_rss() {
    let mut p = stub(&["--retain-mb", "100", "--wait-stdin"]);
    assert!(p.line().starts_with("started"));
    let clock = RunClock::start();
    let mut sampler = Sampler::new(p.pid()).unwrap();
    let before = sampler.sample(&clock).unwrap();
    p.send_line("go");
    assert!(p.line().starts_with("ready"));
    let after = sampler.sample(&clock).unwrap();
    let grown = after.process_rss as i64 - before.process_rss as i64;
    assert!(grown >= 90_000_000, "grew {grown} bytes");
}

#[test]
fn cadence_and_skew() {
    let mut p = stub(&[]);
    assert!(p.line().starts_with("ready"));
    let mut sink = MemorySnapshotSink::default();
    let spec = MonitorSpec {
        target_pid: p.pid(),
        sample_interval_s: 1.0,
        duration_s: 10.0,
    };
    let out = monitor_loop(&spec, &mut sink, &RunClock::start(), &StopSignal::new()).unwrap();
    assert!((9..=11).contains(&out.snapshots), "{out:?}");
    assert_eq!(out.snapshots as usize, sink.snapshots.len());
    assert!(!out.target_exited_early);
    assert!(out.gaps_on_cadence as f64 >= 0.95 * out.gaps as f64, "{out:?}");
    for kind in MetricKind::MONITORED {
        assert_eq!(sink.series(kind).unwrap().len(), sink.snapshots.len());
    }
    for w in sink.snapshots.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].io_read_bytes >= w[0].io_read_bytes);
        assert!(w[1].io_write_bytes >= w[0].io_write_bytes);
    }
    assert!(out.cpu_fraction() < 0.02, "{out:?}");
}

#[test]
fn early_exit_is_flagged() {
    let mut p = stub(&["--duration", "2.5"]);
    assert!(p.line().starts_with("ready"));
    let pid = p.pid();
    let waiter = std::thread::spawn(move || {
        p.child.wait().unwrap();
    });
    let mut sink = MemorySnapshotSink::default();
    let spec = MonitorSpec {
        target_pid: pid,
        sample_interval_s: 0.5,
        duration_s: 20.0,
    };
    let started = std::time::Instant::now();
    let out = monitor_loop(&spec, &mut sink, &RunClock::start(), &StopSignal::new()).unwrap();
    waiter.join().unwrap();
    assert!(out.target_exited_early);
    assert!(started.elapsed() < Duration::from_secs(10));
    assert_eq!(out.snapshots as usize, sink.snapshots.len());
    assert!((3..=7).contains(&sink.snapshots.len()), "{}", sink.snapshots.len());
}

#[test]
fn leaking_stub_trends_up() {
    let mut p = stub(&["--leak-mb-per-s", "1"]);
    assert!(p.line().starts_with("ready"));
    let mut sink = MemorySnapshotSink::default();
    let spec = MonitorSpec {
        target_pid: p.pid(),
        sample_interval_s: 1.0,
        duration_s: 30.0,
    };
    monitor_loop(&spec, &mut sink, &RunClock::start(), &StopSignal::new()).unwrap();
    let r = mk_test(&sink.series(MetricKind::ProcessRss).unwrap(), 0.05).unwrap();
    assert_eq!(r.verdict, Verdict::Increasing, "{r:?}");
    // 1 MiB/s retained.
    assert!((r.slope - 1_048_576.0).abs() < 0.2 * 1_048_576.0, "{r:?}");
}

#[test]
fn constant_stubs_rarely_trend() {
    let mut stubs: Vec<Proc> = (0..20).map(|_| stub(&["--retain-mb", "8"])).collect();
    for s in &mut stubs {
        assert!(s.line().starts_with("ready"));
    }
    let clock = RunClock::start();
    let results: Vec<Verdict> = std::thread::scope(|scope| {
        let handles: Vec<_> = stubs
            .iter()
            .map(|s| {
                let pid = s.pid();
                scope.spawn(move || {
                    let mut sink = MemorySnapshotSink::default();
                    let spec = MonitorSpec {
                        target_pid: pid,
                        sample_interval_s: 1.0,
                        duration_s: 30.0,
                    };
                    monitor_loop(&spec, &mut sink, &clock, &StopSignal::new()).unwrap();
                    mk_test(&sink.series(MetricKind::ProcessRss).unwrap(), 0.05).unwrap().verdict
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let quiet = results.iter().filter(|v| **v == Verdict::NoTrend).count();
    assert!(quiet >= 18, "{results:?}");
}

#[test]
fn invalid_spec_rejected() {
    let spec = MonitorSpec {
        target_pid: std::process::id(),
        sample_interval_s: 0.0,
        duration_s: 1.0,
    };
    let mut sink = MemorySnapshotSink::default();
    assert!(matches!(
        monitor_loop(&spec, &mut sink, &RunClock::start(), &StopSignal::new()),
        Err(MonitorError::Invalid(_))
    ));
}
