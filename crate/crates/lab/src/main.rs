use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Duration;

use aging_lab::config::RunConfig;
use aging_lab::orchestrator::{
    self, cmd_analyze, cmd_full, cmd_run, cmd_selftest, verdict_lines, Overrides, RunError,
    RunOptions, SelftestOptions,
};
use aging_lab::target::{self, TargetError};
use aging_lab::StopSignal;
use aging_lab_core::report::{AnalysisOptions, ResponseTimePath, TableStyle};
use aging_lab_core::DegradationProfile;
use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;

#[derive(Parser)]
#[command(name = "aging-lab", version, about = "Detect software aging: drive load, monitor resources, test for trends")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve a synthetic target with a degradation profile until interrupted.
    Target(TargetArgs),
    /// Run workload and monitor against the configured target.
    Run(RunArgs),
    /// Analyse a run directory and print a report table.
    Analyze(AnalyzeArgs),
    /// Run, then analyse.
    Full(RunArgs),
    /// Check that the harness itself does not age.
    Selftest(SelftestArgs),
    /// Allocation stub used by the monitor tests.
    #[command(hide = true)]
    Stub(StubArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// JSON file holding a degradation profile; flags override it.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[arg(long)]
    leak_bytes: Option<u64>,
    #[arg(long)]
    base_latency_ms: Option<f64>,
    #[arg(long)]
    latency_growth_ms_per_hour: Option<f64>,
    #[arg(long)]
    jitter_ms: Option<f64>,
    #[arg(long)]
    sawtooth_period: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    interval: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    sample_interval: Option<f64>,
    #[arg(long, env = "AGING_LAB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    bucket_width: Option<f64>,
    #[arg(long)]
    raw_response_time: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    run_dir: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 60.0)]
    bucket_width: f64,
    /// full, paper-table-1, paper-table-2 or paper-table-3.
    #[arg(long, default_value = "paper-table-3")]
    style: String,
    /// Analyse per-request response times instead of bucket means.
    #[arg(long)]
    raw_response_time: bool,
    #[arg(long, env = "AGING_LAB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value = "selftest-run")]
    output: PathBuf,
    #[arg(long, default_value_t = 1800.0)]
    duration: f64,
    #[arg(long, default_value_t = 30.0)]
    warmup: f64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 0.05)]
    interval: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, env = "AGING_LAB_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct StubArgs {
    /// Megabytes to allocate and touch before signalling readiness.
    #[arg(long, default_value_t = 0)]
    retain_mb: u64,
    /// Megabytes retained per second afterwards.
    #[arg(long, default_value_t = 0.0)]
    leak_mb_per_s: f64,
    /// Seconds to stay alive after readiness.
    #[arg(long, default_value_t = 3600.0)]
    duration: f64,
    /// Print `started <pid>` and wait for a line on stdin before allocating.
    #[arg(long)]
    wait_stdin: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_directory: self.output.clone(),
            duration_s: self.duration,
            worker_count: self.workers,
            dispatch_interval_s: self.interval,
            warmup_s: self.warmup,
            sample_interval_s: self.sample_interval,
            seed: self.seed,
            alpha: self.alpha,
            bucket_width_s: self.bucket_width,
            raw_response_time: self.raw_response_time,
        }
    }

    fn load(&self) -> Result<RunConfig, RunError> {
        let mut cfg = RunConfig::load(&self.config)?;
        self.overrides().apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn run_options() -> anyhow::Result<RunOptions> {
    let exe = std::env::current_exe().context("locating own executable")?;
    let opts = RunOptions::new(exe);
    let (stop, flag) = (opts.stop.clone(), opts.interrupted.clone());
    ctrlc::set_handler(move || {
        flag.store(true, Ordering::SeqCst);
        stop.stop();
    })
    .context("installing interrupt handler")?;
    Ok(opts)
}

fn exit_with(e: &RunError) -> ExitCode {
    error!("{e}");
    eprintln!("aging-lab: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn cmd_target(a: TargetArgs) -> ExitCode {
    let mut profile = match &a.profile {
        Some(p) => match std::fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<DegradationProfile>(&t).map_err(|e| e.to_string()))
        {
            Ok(p) => p,
            Err(e) => {
                eprintln!("aging-lab: {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => DegradationProfile::default(),
    };
    if let Some(v) = a.leak_bytes {
        profile.leak_per_request = v;
    }
    if let Some(v) = a.base_latency_ms {
        profile.base_latency_ms = v;
    }
    if let Some(v) = a.latency_growth_ms_per_hour {
        profile.latency_growth_ms_per_hour = v;
    }
    if let Some(v) = a.jitter_ms {
        profile.latency_jitter_ms = v;
    }
    if a.sawtooth_period.is_some() {
        profile.sawtooth_period_s = a.sawtooth_period;
    }
    if let Some(v) = a.seed {
        profile.seed = v;
    }
    let handle = match target::serve(profile, &a.host, a.port) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("aging-lab: {e}");
            return ExitCode::from(2);
        }
    };
    let stop = StopSignal::new();
    let s = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || s.stop()) {
        eprintln!("aging-lab: {e}");
        return ExitCode::from(2);
    }
    println!("{}", orchestrator::banner(&format!("http://{}", handle.addr()), std::process::id()));
    let _ = std::io::stdout().flush();
    while !stop.wait_timeout(Duration::from_secs(3600)) {}
    match handle.stop() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aging-lab: {}", TargetError::Runtime(e));
            ExitCode::from(4)
        }
    }
}

fn cmd_stub(a: StubArgs) -> ExitCode {
    use rand::RngCore;
    if a.wait_stdin {
        println!("started {}", std::process::id());
        let _ = std::io::stdout().flush();
        let mut line = String::new();
        let _ = std::io::stdin().read_line(&mut line);
    }
    let mut rng = rand::rng();
    let mut held: Vec<Vec<u8>> = Vec::new();
    let mut grab = |bytes: usize| {
        let mut v = vec![0u8; bytes];
        rng.fill_bytes(&mut v);
        held.push(v);
    };
    for _ in 0..a.retain_mb {
        grab(1 << 20);
    }
    println!("ready {}", std::process::id());
    let _ = std::io::stdout().flush();
    let start = std::time::Instant::now();
    let step = Duration::from_millis(100);
    while start.elapsed().as_secs_f64() < a.duration {
        std::thread::sleep(step);
        if a.leak_mb_per_s > 0.0 {
            grab((a.leak_mb_per_s * step.as_secs_f64() * (1u64 << 20) as f64) as usize);
        }
    }
    std::hint::black_box(&held);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let opts = || {
        run_options().map_err(|e| {
            eprintln!("aging-lab: {e:#}");
            ExitCode::from(2)
        })
    };
    match cli.command {
        Cmd::Target(a) => cmd_target(a),
        Cmd::Stub(a) => cmd_stub(a),
        Cmd::Run(a) => {
            let cfg = match a.load() {
                Ok(c) => c,
                Err(e) => return exit_with(&e),
            };
            let opts = match opts() {
                Ok(o) => o,
                Err(c) => return c,
            };
            match cmd_run(&cfg, &opts) {
                Ok(out) => {
                    println!("run directory: {}", out.dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => exit_with(&e),
            }
        }
        Cmd::Full(a) => {
            let cfg = match a.load() {
                Ok(c) => c,
                Err(e) => return exit_with(&e),
            };
            let opts = match opts() {
                Ok(o) => o,
                Err(c) => return c,
            };
            match cmd_full(&cfg, &opts) {
                Ok(out) => {
                    print!("{}", out.table);
                    for line in verdict_lines(&out.report) {
                        println!("{line}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_with(&e),
            }
        }
        Cmd::Analyze(a) => {
            let style: TableStyle = match a.style.parse() {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("aging-lab: {e}");
                    return ExitCode::from(2);
                }
            };
            let opts = AnalysisOptions {
                alpha: a.alpha,
                bucket_width_s: a.bucket_width,
                response_time: if a.raw_response_time {
                    ResponseTimePath::Raw
                } else {
                    ResponseTimePath::Bucketed
                },
                seed: a.seed,
            };
            match cmd_analyze(&a.run_dir, &opts, style) {
                Ok((_, table)) => {
                    print!("{table}");
                    ExitCode::SUCCESS
                }
                Err(e) => exit_with(&e),
            }
        }
        Cmd::Selftest(a) => {
            let opts = match opts() {
                Ok(o) => o,
                Err(c) => return c,
            };
            let st = SelftestOptions {
                output_directory: a.output,
                duration_s: a.duration,
                warmup_s: a.warmup,
                worker_count: a.workers,
                dispatch_interval_s: a.interval,
                alpha: a.alpha,
                seed: a.seed,
                ..Default::default()
            };
            match cmd_selftest(&st, &opts) {
                Ok(r) => {
                    println!("harness process-rss: {} (p={})", r.rss_verdict, r.rss_p_value.map_or("n/a".into(), aging_lab_core::report::format_p));
                    println!("monitor cpu: {:.4}% of one core", r.monitor_cpu_fraction * 100.0);
                    println!("snapshots: {} ({:.1}% on cadence)", r.snapshots, r.gaps_on_cadence_fraction * 100.0);
                    println!("selftest: {}", if r.passed { "pass" } else { "fail" });
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => exit_with(&e),
            }
        }
    }
}
