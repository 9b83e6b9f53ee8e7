//! Miniature HTTP services with known, parameterised degradation.

use std::net::{SocketAddr, TcpListener};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use aging_lab_core::profile::SAWTOOTH_FLOOR;
use aging_lab_core::DegradationProfile;
use axum::extract::State;
use axum::http::header::HeaderName;
use axum::routing::get;
use axum::{Json, Router};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const CHUNK_BYTES: usize = 1 << 20;
/// Response header carrying the service time the handler slept for.
pub const SERVICE_MS_HEADER: &str = "x-service-ms";

#[derive(Debug, thiserror::Error)]
pub enum TargetError {
    #[error("bind-failed: {addr}: {source}")]
    BindFailed {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("runtime: {0}")]
    Runtime(#[from] std::io::Error),
}

/// Append-only store of pseudo-random bytes held in 1 MiB chunks.
#[derive(Debug)]
pub struct ChunkStore {
    chunks: Vec<Vec<u8>>,
    len: u64,
    rng: ChaCha8Rng,
}

impl ChunkStore {
    pub fn new(seed: u64) -> Self {
        Self {
            chunks: Vec::new(),
            len: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, mut n: u64) {
        self.len += n;
        while n > 0 {
            if self.chunks.last().is_none_or(|c| c.len() == CHUNK_BYTES) {
                self.chunks.push(Vec::with_capacity(CHUNK_BYTES));
            }
            let chunk = self.chunks.last_mut().unwrap();
            let start = chunk.len();
            let take = (CHUNK_BYTES - start).min(n as usize);
            chunk.resize(start + take, 0);
            self.rng.fill_bytes(&mut chunk[start..]);
            n -= take as u64;
        }
    }

    /// Shrinks to `keep` bytes, returning whole chunks to the allocator.
    pub fn truncate(&mut self, keep: u64) {
        if keep >= self.len {
            return;
        }
        let full = (keep / CHUNK_BYTES as u64) as usize;
        let rem = (keep % CHUNK_BYTES as u64) as usize;
        if rem == 0 {
            self.chunks.truncate(full);
        } else {
            self.chunks.truncate(full + 1);
            self.chunks[full].truncate(rem);
        }
        self.chunks.shrink_to_fit();
        self.len = keep;
        trim_heap();
    }
}

#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn trim_heap() {
    // SAFETY: malloc_trim has no preconditions.
    unsafe {
        libc::malloc_trim(0);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn trim_heap() {}

/// Serve large allocations from mmap so released chunks leave the RSS.
#[cfg(all(target_os = "linux", target_env = "gnu"))]
fn tune_allocator() {
    // SAFETY: mallopt only adjusts allocator parameters.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 256 * 1024);
    }
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
fn tune_allocator() {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebugState {
    pub retained_bytes: u64,
    pub request_count: u64,
    pub elapsed_seconds: f64,
}

/// Mutable service state; every mutation goes through one mutex.
#[derive(Debug)]
pub struct TargetState {
    profile: DegradationProfile,
    start: Instant,
    retained: ChunkStore,
    request_count: u64,
    jitter_rng: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    next_release_s: Option<f64>,
}

impl TargetState {
    pub fn new(profile: DegradationProfile) -> Result<Self, TargetError> {
        profile.validate().map_err(|e| TargetError::InvalidProfile(e.to_string()))?;
        let jitter = (profile.latency_jitter_ms > 0.0)
            .then(|| Normal::new(0.0, profile.latency_jitter_ms))
            .transpose()
            .map_err(|e| TargetError::InvalidProfile(e.to_string()))?;
        Ok(Self {
            start: Instant::now(),
            retained: ChunkStore::new(profile.seed ^ 0x5eed_f111),
            request_count: 0,
            jitter_rng: ChaCha8Rng::seed_from_u64(profile.seed),
            jitter,
            next_release_s: profile.sawtooth_period_s,
            profile,
        })
    }

    pub fn elapsed_s(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Accounts one request and returns the service time in milliseconds.
    pub fn handle(&mut self) -> f64 {
        let elapsed = self.elapsed_s();
        self.release_due(elapsed);
        self.request_count += 1;
        self.retained.append(self.profile.leak_per_request);
        let draw = self.next_jitter();
        self.profile.latency_ms(elapsed, draw)
    }

    pub fn next_jitter(&mut self) -> f64 {
        match &self.jitter {
            Some(n) => n.sample(&mut self.jitter_rng),
            None => 0.0,
        }
    }

    /// Drops the store to the floor fraction once per elapsed period.
    pub fn release_due(&mut self, elapsed: f64) {
        let (Some(period), Some(next)) = (self.profile.sawtooth_period_s, self.next_release_s) else {
            return;
        };
        if elapsed < next {
            return;
        }
        let peak = self.retained.len();
        self.retained.truncate((peak as f64 * SAWTOOTH_FLOOR) as u64);
        let behind = ((elapsed - next) / period).floor() + 1.0;
        self.next_release_s = Some(next + behind * period);
        log::info!("sawtooth release at {elapsed:.1}s: {peak} -> {} bytes", self.retained.len());
    }

    pub fn snapshot(&self) -> DebugState {
        DebugState {
            retained_bytes: self.retained.len(),
            request_count: self.request_count,
            elapsed_seconds: self.elapsed_s(),
        }
    }
}

type Shared = Arc<Mutex<TargetState>>;

async fn work(State(state): State<Shared>) -> ([(HeaderName, String); 1], &'static str) {
    let ms = state.lock().unwrap().handle();
    if ms > 0.0 {
        tokio::time::sleep(Duration::from_secs_f64(ms / 1000.0)).await;
    }
    ([(HeaderName::from_static(SERVICE_MS_HEADER), format!("{ms}"))], "ok\n")
}

async fn debug_state(State(state): State<Shared>) -> Json<DebugState> {
    Json(state.lock().unwrap().snapshot())
}

async fn healthz() -> &'static str {
    "ok\n"
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/work", get(work).post(work))
        .route("/healthz", get(healthz))
        .route("/debug/state", get(debug_state))
        .with_state(state)
}

/// A running service. Dropping the handle stops it.
pub struct TargetHandle {
    addr: SocketAddr,
    state: Shared,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl TargetHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn state(&self) -> DebugState {
        self.state.lock().unwrap().snapshot()
    }

    /// Graceful stop: in-flight requests finish, then the runtime exits.
    pub fn stop(mut self) -> std::io::Result<()> {
        self.shutdown_inner()
    }

    /// Blocks until the service stops for another reason.
    pub fn wait(mut self) -> std::io::Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("target thread panicked"))),
            None => Ok(()),
        }
    }

    fn shutdown_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("target thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for TargetHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

/// Binds `host:port` (port 0 picks a free one) and serves `profile` on a
/// background runtime.
pub fn serve(profile: DegradationProfile, host: &str, port: u16) -> Result<TargetHandle, TargetError> {
    let state = Arc::new(Mutex::new(TargetState::new(profile)?));
    tune_allocator();
    let addr_text = format!("{host}:{port}");
    let listener = TcpListener::bind(&addr_text).map_err(|source| TargetError::BindFailed {
        addr: addr_text.clone(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .thread_name("target")
        .enable_all()
        .build()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let app = router(state.clone());
    let thread = std::thread::Builder::new().name("target-main".into()).spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    })?;
    Ok(TargetHandle {
        addr,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
