use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::cna::Probability;
use crate::fissile::DEFAULT_GRACE;
use crate::lock::{LockKind, LockParams};
use crate::topology::{TopologyError, TopologyMap};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("threads must be at least 1")]
    NoThreads,
    #[error("at most {max} threads are supported, got {got}")]
    TooManyThreads { got: u32, max: u32 },
    #[error("runs must be odd so the median is a sample, got {0}")]
    EvenRuns(u32),
    #[error("duration must be positive")]
    ZeroDuration,
    #[error("lock array needs at least one lock")]
    EmptyLockArray,
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyChoice {
    /// Query the OS at each acquisition (falls back to one node).
    Os,
    /// `thread_index % nodes`.
    Synthetic(u32),
}

impl fmt::Display for TopologyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyChoice::Os => f.write_str("os"),
            TopologyChoice::Synthetic(n) => write!(f, "synthetic:{n}"),
        }
    }
}

impl TopologyChoice {
    pub fn build(self) -> Result<TopologyMap, TopologyError> {
        match self {
            TopologyChoice::Os => TopologyMap::from_env(),
            TopologyChoice::Synthetic(n) => TopologyMap::synthetic(n),
        }
    }
}

/// Where wait samples are logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogMode {
    /// Appended to one log inside the critical section, which lengthens it.
    Global,
    /// Kept in per-thread buffers, appended after release.
    PerThread,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lock: LockKind,
    /// Normal (non-FIFO) threads.
    pub threads: u32,
    pub duration: Duration,
    /// Shared PRNG steps executed inside the critical section.
    pub cs_steps: u32,
    /// Non-critical section length drawn from `[0, ncs_max)`; 0 means empty.
    pub ncs_max: u32,
    /// FIFO-designated threads, in addition to `threads`.
    pub fifo_threads: u32,
    pub fifo_ncs_max: u32,
    pub grace: u32,
    pub flush: Probability,
    pub topology: TopologyChoice,
    pub seed: u64,
    pub runs: u32,
    pub log_mode: LogMode,
    /// Size of the hashed lock array used by the atomic workload.
    pub lock_array: u32,
    /// Increments per thread in the verification exclusion check.
    pub verify_iterations: u64,
    /// Acquisitions per thread in the traced verification phase.
    pub trace_iterations: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            lock: LockKind::Fissile,
            threads: 1,
            duration: Duration::from_secs(10),
            cs_steps: 2,
            ncs_max: 0,
            fifo_threads: 0,
            fifo_ncs_max: 2000,
            grace: DEFAULT_GRACE,
            flush: Probability::DEFAULT_FLUSH,
            topology: TopologyChoice::Os,
            seed: 1,
            runs: 7,
            log_mode: LogMode::Global,
            lock_array: 64,
            verify_iterations: 100_000,
            trace_iterations: 20_000,
        }
    }
}

impl BenchConfig {
    pub const MAX_THREADS: u32 = u16::MAX as u32;

    /// Defaults for the hashed-lock-array workload.
    pub fn atomic_default() -> Self {
        Self {
            ncs_max: 200,
            ..Self::default()
        }
    }

    pub fn total_threads(&self) -> u32 {
        self.threads + self.fifo_threads
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.total_threads() == 0 {
            return Err(ConfigError::NoThreads);
        }
        if self.total_threads() > Self::MAX_THREADS {
            return Err(ConfigError::TooManyThreads {
                got: self.total_threads(),
                max: Self::MAX_THREADS,
            });
        }
        if self.runs.is_multiple_of(2) {
            return Err(ConfigError::EvenRuns(self.runs));
        }
        if self.duration.is_zero() {
            return Err(ConfigError::ZeroDuration);
        }
        if self.lock_array == 0 {
            return Err(ConfigError::EmptyLockArray);
        }
        if let TopologyChoice::Synthetic(0) = self.topology {
            return Err(TopologyError::ZeroNodes.into());
        }
        Ok(())
    }

    pub fn lock_params(&self) -> LockParams {
        LockParams {
            grace: self.grace,
            flush: self.flush,
            trace: None,
        }
    }

    pub(crate) fn topology_map(&self) -> Result<Arc<TopologyMap>, ConfigError> {
        Ok(Arc::new(self.topology.build()?))
    }
}
