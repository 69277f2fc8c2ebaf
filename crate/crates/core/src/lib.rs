//! A compound lock with a test-and-set fast path and a NUMA-aware queue
//! lock (CNA) behind it, plus the baseline locks (TTS, MCS, CNA) it is
//! measured against, a MutexBench-style harness and a verification suite.
//!
//! ```
//! use fissile_core::{with_lock, FissileLock, ThreadContext};
//!
//! let lock = FissileLock::new();
//! let mut ctx = ThreadContext::simple(0);
//! let v = with_lock(&lock, &mut ctx, || 41 + 1);
//! assert_eq!(v, 42);
//! ```

pub mod cna;
pub mod element;
pub mod fissile;
pub mod harness;
pub mod lock;
pub mod mcs;
pub mod metrics;
pub mod spin;
pub mod topology;
pub mod trace;
pub mod ts;
pub mod verify;

pub use cna::{CnaLock, Probability};
pub use fissile::{FissileLock, DEFAULT_GRACE};
pub use harness::{
    run_atomic_workload, run_mutexbench, run_mutexbench_with, BenchConfig, BenchError, BenchReport,
    ConfigError, LogMode, RunMetrics, TopologyChoice, CSV_HEADER,
};
pub use lock::{with_lock, LockKind, LockParams, RawLock, ThreadContext, UnknownLockKind};
pub use mcs::McsLock;
pub use topology::{TopologyError, TopologyMap};
pub use trace::{EventKind, TraceEvent, TraceLog, TraceSink};
pub use ts::TtsLock;
pub use verify::{run_verification, CheckOutcome, VerificationReport};
