//! Run clock and cooperative stop signal shared by driver, monitor and
//! orchestrator.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

/// Monotonic origin of a run's time axis, exchanged once at startup.
#[derive(Debug, Clone, Copy)]
pub struct RunClock {
    origin: Instant,
    origin_unix_ms: u64,
}

impl RunClock {
    pub fn start() -> Self {
        let origin_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        Self {
            origin: Instant::now(),
            origin_unix_ms,
        }
    }

    pub fn origin(&self) -> Instant {
        self.origin
    }

    pub fn origin_unix_ms(&self) -> u64 {
        self.origin_unix_ms
    }

    pub fn elapsed_s(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    pub fn seconds_at(&self, at: Instant) -> f64 {
        at.saturating_duration_since(self.origin).as_secs_f64()
    }

    pub fn at(&self, seconds: f64) -> Instant {
        self.origin + Duration::from_secs_f64(seconds.max(0.0))
    }
}

#[derive(Debug, Default)]
struct StopState {
    stopped: Mutex<bool>,
    cv: Condvar,
}

/// Cloneable stop flag with interruptible sleeps.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<StopState>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self) {
        *self.0.stopped.lock().unwrap() = true;
        self.0.cv.notify_all();
    }

    pub fn is_stopped(&self) -> bool {
        *self.0.stopped.lock().unwrap()
    }

    /// Sleeps for `d` unless stopped first. Returns true if stopped.
    pub fn wait_timeout(&self, d: Duration) -> bool {
        self.wait_until(Instant::now() + d)
    }

    pub fn wait_until(&self, deadline: Instant) -> bool {
        let mut stopped = self.0.stopped.lock().unwrap();
        loop {
            if *stopped {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            stopped = self.0.cv.wait_timeout(stopped, deadline - now).unwrap().0;
        }
    }
}
