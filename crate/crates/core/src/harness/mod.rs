//! MutexBench-style measurement harness.
//!
//! Each thread loops: read the lock clock, acquire, run the critical
//! section (advance a shared PRNG, record the wait, tally NUMA
//! migration), release, then run a non-critical section that advances a
//! thread-local PRNG a random number of steps. A run lasts a fixed wall
//! clock interval; a report is the per-metric median over several runs.

mod atomic;
mod config;
mod report;

use std::cell::UnsafeCell;
use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lock::{RawLock, ThreadContext};
use crate::metrics::{self, LockClock, MigrationTally, WaitSample, WaitStats};
use crate::topology::TopologyMap;

pub use atomic::{run_atomic_workload, AtomicRecord, LockTable};
pub use config::{BenchConfig, ConfigError, LogMode, TopologyChoice};
pub use report::{aggregate_runs, BenchReport, RunMetrics, CSV_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("failed to spawn benchmark thread: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("benchmark thread panicked")]
    ThreadPanicked,
}

/// State touched only inside the critical section.
pub(crate) struct CsState {
    rng: ChaCha8Rng,
    tally: MigrationTally,
    log: Vec<WaitSample>,
}

/// Lock-protected cell. Every access must happen while holding the lock
/// that guards the owning benchmark.
pub(crate) struct Guarded<T>(UnsafeCell<T>);

// SAFETY: accesses are serialized by the benchmark lock.
unsafe impl<T: Send> Sync for Guarded<T> {}

impl<T> Guarded<T> {
    pub(crate) fn new(v: T) -> Self {
        Self(UnsafeCell::new(v))
    }

    /// # Safety
    ///
    /// Caller holds the guarding lock and no other reference is live.
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn get(&self) -> &mut T {
        &mut *self.0.get()
    }

    pub(crate) fn into_inner(self) -> T {
        self.0.into_inner()
    }
}

/// Per-thread outcome of one run.
#[derive(Debug, Default)]
pub(crate) struct ThreadResult {
    pub iterations: u64,
    pub fifo: bool,
    pub log: Vec<WaitSample>,
}

/// Critical-section body plus the lock that guards it.
pub(crate) trait Workload: Sync {
    fn lock(&self) -> &dyn RawLock;
    /// Extra work inside the critical section.
    fn critical(&self);
}

pub(crate) fn thread_seed(seed: u64, run: u32, thread: u32) -> u64 {
    let mut x = seed ^ (u64::from(run) << 32) ^ u64::from(thread);
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[inline]
fn advance(rng: &mut impl RngCore, steps: u32) {
    for _ in 0..steps {
        black_box(rng.next_u32());
    }
}

/// Runs one measurement interval of `work` and returns its metrics.
pub(crate) fn drive<W: Workload>(
    cfg: &BenchConfig,
    run: u32,
    topology: &Arc<TopologyMap>,
    work: &W,
    keep_samples: bool,
) -> Result<RunMetrics, BenchError> {
    let total = cfg.total_threads();
    let clock = LockClock::new();
    let cs = Guarded::new(CsState {
        rng: ChaCha8Rng::seed_from_u64(thread_seed(cfg.seed, run, u32::MAX)),
        tally: MigrationTally::default(),
        log: Vec::new(),
    });
    let stop = AtomicBool::new(false);
    let go = AtomicBool::new(false);

    let (results, elapsed) = thread::scope(|s| -> Result<_, BenchError> {
        let mut handles = Vec::with_capacity(total as usize);
        for t in 0..total {
            let fifo = t >= cfg.threads;
            let (clock, cs, stop, go) = (&clock, &cs, &stop, &go);
            let topology = topology.clone();
            let h = thread::Builder::new()
                .name(format!("bench-{t}"))
                .spawn_scoped(s, move || {
                    let seed = thread_seed(cfg.seed, run, t);
                    let mut ctx = ThreadContext::new(t, topology, seed).with_fifo(fifo);
                    let mut ncs_rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
                    let ncs_max = if fifo { cfg.fifo_ncs_max } else { cfg.ncs_max };
                    let per_thread = cfg.log_mode == LogMode::PerThread;
                    let lock = work.lock();
                    let mut out = ThreadResult {
                        fifo,
                        ..ThreadResult::default()
                    };
                    while !go.load(Ordering::Acquire) && !stop.load(Ordering::Relaxed) {
                        thread::yield_now();
                    }
                    while !stop.load(Ordering::Relaxed) {
                        let node = ctx.numa_id();
                        let pre = clock.read();
                        lock.acquire(&mut ctx);
                        // SAFETY: inside the critical section.
                        let sample = unsafe {
                            let st = cs.get();
                            advance(&mut st.rng, cfg.cs_steps);
                            work.critical();
                            let wait = clock.observe_then_advance(pre);
                            st.tally.record(node);
                            let sample = WaitSample {
                                wait: u32::try_from(wait).unwrap_or(u32::MAX),
                                thread: t as u16,
                                fifo,
                            };
                            if !per_thread {
                                st.log.push(sample);
                            }
                            sample
                        };
                        // SAFETY: acquired above with `ctx`.
                        unsafe { lock.release(&mut ctx) };
                        if per_thread {
                            out.log.push(sample);
                        }
                        if ncs_max > 0 {
                            let n = ncs_rng.random_range(0..ncs_max);
                            advance(&mut ncs_rng, n);
                        }
                        out.iterations += 1;
                    }
                    out
                })
                .map_err(BenchError::Spawn);
            match h {
                Ok(h) => handles.push(h),
                Err(e) => {
                    stop.store(true, Ordering::Release);
                    return Err(e);
                }
            }
        }
        go.store(true, Ordering::Release);
        let t0 = Instant::now();
        thread::sleep(cfg.duration);
        stop.store(true, Ordering::Release);
        let elapsed = t0.elapsed();
        let mut results = Vec::with_capacity(handles.len());
        for h in handles {
            results.push(h.join().map_err(|_| BenchError::ThreadPanicked)?);
        }
        Ok((results, elapsed))
    })?;

    let mut cs = cs.into_inner();
    let mut log = std::mem::take(&mut cs.log);
    for r in &results {
        log.extend_from_slice(&r.log);
    }
    let mut m = summarize(cfg, &results, &log, &cs.tally, clock.read(), elapsed);
    if keep_samples {
        m.samples = log;
    }
    Ok(m)
}

fn summarize(
    cfg: &BenchConfig,
    results: &[ThreadResult],
    log: &[WaitSample],
    tally: &MigrationTally,
    clock_final: u64,
    elapsed: Duration,
) -> RunMetrics {
    let secs = elapsed.as_secs_f64();
    let per_thread: Vec<u64> = results.iter().map(|r| r.iterations).collect();
    let total: u64 = per_thread.iter().sum();
    let fifo_total: u64 = results
        .iter()
        .filter(|r| r.fifo)
        .map(|r| r.iterations)
        .sum();
    let waits: Vec<u32> = log.iter().map(|s| s.wait).collect();
    let fifo_waits: Vec<u32> = log.iter().filter(|s| s.fifo).map(|s| s.wait).collect();

    let mut warnings = Vec::new();
    if per_thread.contains(&0) {
        warnings.push("a thread completed zero iterations; spread is unbounded".to_owned());
    }
    if total != clock_final || total != log.len() as u64 {
        warnings.push(format!(
            "conservation mismatch: iterations {total}, clock {clock_final}, samples {}",
            log.len()
        ));
    }
    if cfg.total_threads() as usize > thread::available_parallelism().map_or(1, |n| n.get()) {
        warnings.push("more threads than logical CPUs; results reflect preemption".to_owned());
    }

    RunMetrics {
        throughput: total as f64 / secs,
        normal_throughput: (total - fifo_total) as f64 / secs,
        fifo_throughput: fifo_total as f64 / secs,
        spread: metrics::spread(&per_thread),
        migration: metrics::migration_reciprocal(tally),
        rstddev: metrics::rstddev(&waits),
        theil_t: metrics::theil_t(&waits),
        fifo_waits: WaitStats::from_waits(&fifo_waits),
        acquisitions: total,
        migrations: tally.migrations,
        per_thread,
        elapsed_secs: secs,
        warnings,
        samples: Vec::new(),
    }
}

struct CentralLock {
    lock: Box<dyn RawLock>,
}

impl Workload for CentralLock {
    fn lock(&self) -> &dyn RawLock {
        &*self.lock
    }

    #[inline]
    fn critical(&self) {}
}

/// Runs MutexBench: one central lock, `cfg.runs` independent runs,
/// medians reported.
pub fn run_mutexbench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    run_mutexbench_with(cfg, false)
}

/// As [`run_mutexbench`], optionally keeping every run's raw wait samples
/// for a log dump.
pub fn run_mutexbench_with(
    cfg: &BenchConfig,
    keep_samples: bool,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let topology = cfg.topology_map()?;
    let mut runs = Vec::with_capacity(cfg.runs as usize);
    for run in 0..cfg.runs {
        let work = CentralLock {
            lock: cfg.lock.build(&cfg.lock_params()),
        };
        let mut m = drive(cfg, run, &topology, &work, keep_samples)?;
        m.warnings.extend(topology.warnings().iter().cloned());
        runs.push(m);
    }
    Ok(BenchReport::new(cfg.clone(), runs))
}

#[cfg(test)]
mod tests;
