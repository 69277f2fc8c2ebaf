//! The uniform lock contract, per-thread context and run-time lock
//! selection.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;
use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::SeedableRng;
use thiserror::Error;

use crate::cna::{CnaLock, Probability};
use crate::element::ElementPool;
use crate::fissile::{FissileLock, DEFAULT_GRACE};
use crate::mcs::McsLock;
use crate::spin::Backoff;
use crate::topology::TopologyMap;
use crate::trace::TraceSink;
use crate::ts::TtsLock;

/// Aligns `T` to 128 bytes so adjacent-line prefetch cannot pair it with
/// a neighbour.
#[repr(align(128))]
#[derive(Debug, Default)]
pub struct CachePadded<T>(pub T);

impl<T> Deref for CachePadded<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.0
    }
}

/// Mutual exclusion entry points shared by every lock kind.
///
/// A release by the holder happens-before the next successful acquire, so
/// plain writes made inside the critical section are visible to the next
/// holder.
pub trait RawLock: Send + Sync {
    fn acquire(&self, ctx: &mut ThreadContext);

    /// # Safety
    ///
    /// The calling thread must hold the lock, having acquired it with this
    /// same `ctx`.
    unsafe fn release(&self, ctx: &mut ThreadContext);

    fn kind(&self) -> LockKind;
}

/// Runs `f` with `lock` held.
pub fn with_lock<R>(lock: &dyn RawLock, ctx: &mut ThreadContext, f: impl FnOnce() -> R) -> R {
    lock.acquire(ctx);
    let r = f();
    // SAFETY: acquired just above with the same context.
    unsafe { lock.release(ctx) };
    r
}

/// Thread-private state passed to every lock operation.
#[derive(Debug)]
pub struct ThreadContext {
    index: u32,
    fifo: bool,
    topology: Arc<TopologyMap>,
    pub(crate) rng: SmallRng,
    pub(crate) backoff: Backoff,
    pub(crate) pool: ElementPool,
    seq: u64,
}

impl ThreadContext {
    pub fn new(index: u32, topology: Arc<TopologyMap>, seed: u64) -> Self {
        let seed = seed ^ (u64::from(index) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Self {
            index,
            fifo: false,
            topology,
            rng: SmallRng::seed_from_u64(seed),
            backoff: Backoff::new(seed.rotate_left(17)),
            pool: ElementPool::default(),
            seq: 0,
        }
    }

    /// Context on a single synthetic node, for tests and simple callers.
    pub fn simple(index: u32) -> Self {
        let topo = TopologyMap::synthetic(1).expect("one node");
        Self::new(index, Arc::new(topo), 0)
    }

    pub fn with_fifo(mut self, fifo: bool) -> Self {
        self.fifo = fifo;
        self
    }

    pub fn index(&self) -> u32 {
        self.index
    }

    pub fn is_fifo(&self) -> bool {
        self.fifo
    }

    pub fn topology(&self) -> &TopologyMap {
        &self.topology
    }

    /// Resolved at every call; unbound threads can migrate between nodes.
    pub fn numa_id(&self) -> u32 {
        self.topology.resolve(self.index)
    }

    pub(crate) fn next_element_id(&mut self) -> u64 {
        self.seq += 1;
        (u64::from(self.index) << 40) | (self.seq & ((1 << 40) - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LockKind {
    Tts,
    Mcs,
    Cna,
    Fissile,
    FissileFifo,
}

impl LockKind {
    pub const ALL: [LockKind; 5] = [
        LockKind::Tts,
        LockKind::Mcs,
        LockKind::Cna,
        LockKind::Fissile,
        LockKind::FissileFifo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LockKind::Tts => "tts",
            LockKind::Mcs => "mcs",
            LockKind::Cna => "cna",
            LockKind::Fissile => "fissile",
            LockKind::FissileFifo => "fissile-fifo",
        }
    }

    pub fn build(self, params: &LockParams) -> Box<dyn RawLock> {
        match self {
            LockKind::Tts => Box::new(TtsLock::new()),
            LockKind::Mcs => Box::new(McsLock::new()),
            LockKind::Cna => {
                let mut l = CnaLock::with_flush(params.flush);
                if let Some(t) = &params.trace {
                    l = l.with_trace(t.clone());
                }
                Box::new(l)
            }
            LockKind::Fissile | LockKind::FissileFifo => {
                let mut l = FissileLock::with_params(params.grace, params.flush)
                    .honor_fifo(self == LockKind::FissileFifo);
                if let Some(t) = &params.trace {
                    l = l.with_trace(t.clone());
                }
                Box::new(l)
            }
        }
    }
}

impl fmt::Display for LockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown lock kind {0:?} (expected tts, mcs, cna, fissile or fissile-fifo)")]
pub struct UnknownLockKind(pub String);

impl FromStr for LockKind {
    type Err = UnknownLockKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LockKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownLockKind(s.to_owned()))
    }
}

/// Tunables shared by lock constructors.
#[derive(Clone)]
pub struct LockParams {
    pub grace: u32,
    pub flush: Probability,
    pub trace: Option<Arc<dyn TraceSink>>,
}

impl Default for LockParams {
    fn default() -> Self {
        Self {
            grace: DEFAULT_GRACE,
            flush: Probability::DEFAULT_FLUSH,
            trace: None,
        }
    }
}

impl fmt::Debug for LockParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LockParams")
            .field("grace", &self.grace)
            .field("flush", &self.flush)
            .field("trace", &self.trace.is_some())
            .finish()
    }
}
