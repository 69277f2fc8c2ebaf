//! Fissile: a test-and-set outer lock used as a fast path in front of a
//! CNA inner lock.
//!
//! Owning the outer word is owning the lock. An arriving thread makes one
//! attempt on the outer word; on failure it queues on the inner lock. The
//! inner owner (the *alpha*) is the only thread that ever spins on the
//! outer word. It spins for a grace period, then publishes impatience by
//! adding 2 to `impatient`. Every release stores the current `impatient`
//! value into the outer word, so once the alpha is impatient the next
//! release leaves the word at 2 instead of 0: arrivals see a nonzero word
//! and divert, and only the alpha, which swaps the 2 back to 1, can take
//! it. The alpha drops the inner lock as soon as it owns the outer word,
//! so its queue element lives on the stack of the acquire call.
//!
//! FIFO-designated acquisitions skip the fast path, add 2 to `impatient`
//! before queueing, and mark their queue element so the inner lock never
//! culls it. While any FIFO request is pending, every release hands off
//! to the alpha.

use std::fmt;
use std::sync::atomic::{fence, AtomicU32, Ordering};
use std::sync::Arc;

use crate::cna::{CnaLock, Probability};
use crate::element::QueueElement;
use crate::lock::{CachePadded, LockKind, RawLock, ThreadContext};
use crate::spin::{spin_hint, SpinWait};
use crate::trace::{EventKind, TraceEvent, TraceSink};
use crate::ts::{TriStateWord, HANDOFF, LOCKED, UNLOCKED};

/// Grace period of the alpha thread, in outer-word probes.
pub const DEFAULT_GRACE: u32 = 50;

/// Spin hints a retired queue element is kept in scope (poisoned) when
/// tracing, so a late access by another thread is caught.
const QUARANTINE_SPINS: u32 = 32;

const IMPATIENCE_STEP: u32 = 2;

pub struct FissileLock {
    outer: CachePadded<TriStateWord>,
    impatient: CachePadded<AtomicU32>,
    inner: CnaLock,
    grace: u32,
    honor_fifo: bool,
    trace: Option<Arc<dyn TraceSink>>,
    // Instrumentation, maintained only while a trace sink is attached.
    alpha_spinners: AtomicU32,
    alpha_peak: AtomicU32,
}

impl Default for FissileLock {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for FissileLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FissileLock")
            .field("outer", &self.outer_value())
            .field("impatient", &self.impatient_value())
            .field("grace", &self.grace)
            .field("honor_fifo", &self.honor_fifo)
            .finish_non_exhaustive()
    }
}

impl FissileLock {
    pub fn new() -> Self {
        Self::with_params(DEFAULT_GRACE, Probability::DEFAULT_FLUSH)
    }

    pub fn with_params(grace: u32, flush: Probability) -> Self {
        Self {
            outer: CachePadded(TriStateWord::new()),
            impatient: CachePadded(AtomicU32::new(0)),
            inner: CnaLock::with_flush(flush),
            grace,
            honor_fifo: false,
            trace: None,
            alpha_spinners: AtomicU32::new(0),
            alpha_peak: AtomicU32::new(0),
        }
    }

    /// Whether FIFO-designated contexts get FIFO service. Off, the FIFO
    /// attribute of a context is ignored.
    pub fn honor_fifo(mut self, on: bool) -> Self {
        self.honor_fifo = on;
        self
    }

    pub fn with_trace(mut self, sink: Arc<dyn TraceSink>) -> Self {
        self.inner = std::mem::take(&mut self.inner).with_trace(sink.clone());
        self.trace = Some(sink);
        self
    }

    pub fn grace(&self) -> u32 {
        self.grace
    }

    pub fn outer_value(&self) -> u32 {
        self.outer.load(Ordering::Relaxed)
    }

    pub fn impatient_value(&self) -> u32 {
        self.impatient.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &CnaLock {
        &self.inner
    }

    /// Highest number of threads seen spinning on the outer word at once.
    /// Only tracked while a trace sink is attached.
    pub fn peak_alpha_spinners(&self) -> u32 {
        self.alpha_peak.load(Ordering::SeqCst)
    }

    #[inline]
    fn emit(&self, ev: impl FnOnce() -> TraceEvent) {
        if let Some(t) = &self.trace {
            t.record(ev());
        }
    }

    #[cold]
    fn slow_path(&self, ctx: &mut ThreadContext, fifo: bool) {
        if fifo {
            self.impatient.fetch_add(IMPATIENCE_STEP, Ordering::SeqCst);
            self.emit(|| TraceEvent::new(ctx.index(), EventKind::ImpatientSet).fifo(true));
        }
        let elem = QueueElement::new(ctx.next_element_id(), ctx.numa_id(), fifo);
        let idx = ctx.index();
        // SAFETY: `elem` outlives the inner critical section, which ends
        // before this function returns.
        unsafe {
            self.inner.acquire_with(&elem, &mut ctx.rng, idx);
        }
        self.alpha_wait(idx, fifo);
        unsafe {
            self.inner.release_with(&elem);
        }
        elem.poison();
        if self.trace.is_some() {
            for _ in 0..QUARANTINE_SPINS {
                spin_hint();
            }
        }
    }

    /// Spins on the outer word as the inner lock's owner until it owns the
    /// outer word.
    fn alpha_wait(&self, idx: u32, fifo: bool) {
        if self.trace.is_some() {
            let n = self.alpha_spinners.fetch_add(1, Ordering::SeqCst) + 1;
            self.alpha_peak.fetch_max(n, Ordering::SeqCst);
        }
        let mut impatient = fifo;
        let mut w = SpinWait::new();
        let mut won = None;
        for _ in 0..self.grace {
            let prior = self.outer.swap_locked();
            if prior != LOCKED {
                won = Some(prior);
                break;
            }
            w.spin();
        }
        let prior = match won {
            Some(p) => p,
            None => {
                if !impatient {
                    self.impatient.fetch_add(IMPATIENCE_STEP, Ordering::SeqCst);
                    fence(Ordering::SeqCst);
                    impatient = true;
                    self.emit(|| TraceEvent::new(idx, EventKind::ImpatientSet));
                }
                loop {
                    if self.outer.load(Ordering::Relaxed) == LOCKED {
                        w.spin();
                        continue;
                    }
                    let prior = self.outer.swap_locked();
                    if prior != LOCKED {
                        break prior;
                    }
                }
            }
        };
        if prior >= HANDOFF {
            self.emit(|| TraceEvent::new(idx, EventKind::HandoffTaken).value(u64::from(prior)));
        } else {
            debug_assert_eq!(prior, UNLOCKED);
            self.emit(|| TraceEvent::new(idx, EventKind::OuterWin));
        }
        if impatient {
            self.impatient.fetch_sub(IMPATIENCE_STEP, Ordering::SeqCst);
        }
        if self.trace.is_some() {
            self.alpha_spinners.fetch_sub(1, Ordering::SeqCst);
        }
    }
}

impl RawLock for FissileLock {
    #[inline]
    fn acquire(&self, ctx: &mut ThreadContext) {
        let fifo = self.honor_fifo && ctx.is_fifo();
        if !fifo && self.outer.try_acquire() {
            self.emit(|| TraceEvent::new(ctx.index(), EventKind::FastPathWin));
            return;
        }
        self.emit(|| TraceEvent::new(ctx.index(), EventKind::Divert).fifo(fifo));
        self.slow_path(ctx, fifo);
    }

    #[inline]
    unsafe fn release(&self, ctx: &mut ThreadContext) {
        let v = self.impatient.load(Ordering::SeqCst);
        self.emit(|| TraceEvent::new(ctx.index(), EventKind::Release).value(u64::from(v)));
        self.outer.release(v);
    }

    fn kind(&self) -> LockKind {
        if self.honor_fifo {
            LockKind::FissileFifo
        } else {
            LockKind::Fissile
        }
    }
}
