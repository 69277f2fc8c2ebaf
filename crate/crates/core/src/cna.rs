//! Compact NUMA-aware (CNA) queue lock, acquire-time variant.
//!
//! Remote waiters are moved to a secondary chain that travels from owner
//! to owner inside the queue elements, so the lock itself is just a tail
//! pointer. Reorganization happens once per acquisition, right after the
//! owner is granted, and looks ahead a single element:
//!
//! * with probability `flush`, a non-empty secondary chain is spliced in
//!   directly behind the owner, which moves the preferred node to the head
//!   of the secondary on the next handover;
//! * otherwise, if the owner's successor is remote, not FIFO, and not the
//!   chain tail, it is culled onto the secondary chain.
//!
//! At release the owner prefers its primary successor and falls back to
//! the secondary chain when the primary is empty.
//!
//! The preferred node is the owner's node, except that a FIFO owner keeps
//! the node it inherited so that servicing it does not shift the
//! preference.

use std::fmt;
use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::element::QueueElement;
use crate::lock::{CachePadded, LockKind, RawLock, ThreadContext};
use crate::mcs::{swap_tail, wait_granted, wait_next};
use crate::trace::{EventKind, TraceEvent, TraceSink};

/// A rational probability `num / den` with `0 < num <= den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probability {
    num: u32,
    den: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("probability must satisfy 0 < {num}/{den} <= 1")]
pub struct BadProbability {
    pub num: u32,
    pub den: u32,
}

impl Probability {
    pub const DEFAULT_FLUSH: Probability = Probability { num: 1, den: 256 };
    pub const ALWAYS: Probability = Probability { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, BadProbability> {
        if num == 0 || den == 0 || num > den {
            return Err(BadProbability { num, den });
        }
        Ok(Self { num, den })
    }

    pub fn one_in(den: u32) -> Result<Self, BadProbability> {
        Self::new(1, den)
    }

    pub fn numerator(self) -> u32 {
        self.num
    }

    pub fn denominator(self) -> u32 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// True with probability `p`.
#[inline]
pub fn bernoulli_trial<R: Rng + ?Sized>(rng: &mut R, p: Probability) -> bool {
    rng.random_ratio(p.num, p.den)
}

/// What an acquire-time reorganization did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reorganization {
    Nothing,
    Culled,
    Flushed,
}

pub struct CnaLock {
    tail: CachePadded<AtomicPtr<QueueElement>>,
    holder: CachePadded<AtomicPtr<QueueElement>>,
    flush: Probability,
    trace: Option<Arc<dyn TraceSink>>,
}

// SAFETY: the raw pointers are only dereferenced under the queue protocol.
unsafe impl Send for CnaLock {}
unsafe impl Sync for CnaLock {}

impl Default for CnaLock {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for CnaLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CnaLock")
            .field("tail", &self.tail.load(Ordering::Relaxed))
            .field("flush", &self.flush)
            .finish_non_exhaustive()
    }
}

impl CnaLock {
    pub fn new() -> Self {
        Self::with_flush(Probability::DEFAULT_FLUSH)
    }

    pub fn with_flush(flush: Probability) -> Self {
        Self {
            tail: CachePadded(AtomicPtr::new(ptr::null_mut())),
            holder: CachePadded(AtomicPtr::new(ptr::null_mut())),
            flush,
            trace: None,
        }
    }

    pub fn with_trace(mut self, sink: Arc<dyn TraceSink>) -> Self {
        self.trace = Some(sink);
        self
    }

    pub fn flush_probability(&self) -> Probability {
        self.flush
    }

    pub fn is_quiescent(&self) -> bool {
        self.tail.load(Ordering::Acquire).is_null()
    }

    #[inline]
    fn emit(&self, ev: impl FnOnce() -> TraceEvent) {
        if let Some(t) = &self.trace {
            t.record(ev());
        }
    }

    /// Enqueues `elem`, waits to be granted, then reorganizes the chain.
    ///
    /// # Safety
    ///
    /// `elem` must be freshly prepared and stay alive and unmoved until the
    /// matching [`CnaLock::release_with`] returns.
    pub unsafe fn acquire_with<R: Rng + ?Sized>(
        &self,
        elem: &QueueElement,
        rng: &mut R,
        thread: u32,
    ) -> Reorganization {
        let pre = self.trace.as_ref().map_or(0, |t| t.stamp());
        let pred = swap_tail(&self.tail, elem);
        self.emit(|| {
            TraceEvent::new(thread, EventKind::Enqueued)
                .value(elem.id())
                .pre(pre)
                .fifo(elem.fifo())
        });
        if !pred.is_null() {
            (*pred).touch();
            (*pred)
                .next
                .store(ptr::from_ref(elem).cast_mut(), Ordering::Release);
            wait_granted(elem);
        }
        self.emit(|| {
            TraceEvent::new(thread, EventKind::InnerGranted)
                .value(elem.id())
                .fifo(elem.fifo())
        });
        // The trial runs even with an empty secondary; a success is then a
        // no-op and the cull rule applies.
        self.reorganize_with_rng(elem, rng, thread)
    }

    /// Reorganizes the chain behind `owner`, drawing the flush trial from
    /// `rng`.
    ///
    /// # Safety
    ///
    /// The caller must own the lock through `owner`.
    pub unsafe fn reorganize_with_rng<R: Rng + ?Sized>(
        &self,
        owner: &QueueElement,
        rng: &mut R,
        thread: u32,
    ) -> Reorganization {
        let flush = bernoulli_trial(rng, self.flush);
        self.reorganize(owner, flush, thread)
    }

    /// One look-ahead-one reorganization step. `flush` is the outcome of
    /// the Bernoulli trial.
    ///
    /// # Safety
    ///
    /// The caller must own the lock through `owner`.
    pub unsafe fn reorganize(
        &self,
        owner: &QueueElement,
        flush: bool,
        thread: u32,
    ) -> Reorganization {
        owner.touch();
        let preferred = if owner.fifo() {
            owner.preferred.load(Ordering::Relaxed)
        } else {
            owner.numa_id()
        };
        owner.preferred.store(preferred, Ordering::Relaxed);

        let sec_head = owner.sec_head.load(Ordering::Relaxed);
        if flush && !sec_head.is_null() {
            self.flush_secondary(owner, sec_head);
            self.emit(|| TraceEvent::new(thread, EventKind::Flushed).value(owner.id()));
            return Reorganization::Flushed;
        }

        let next = owner.next.load(Ordering::Acquire);
        if next.is_null() {
            return Reorganization::Nothing;
        }
        let cand = &*next;
        if cand.numa_id() == preferred || cand.fifo() {
            return Reorganization::Nothing;
        }
        let after = cand.next.load(Ordering::Acquire);
        if after.is_null() {
            // `cand` may still be the tail; new arrivals would link to it.
            return Reorganization::Nothing;
        }
        let was_tail = ptr::eq(self.tail.load(Ordering::Acquire), next);
        debug_assert!(!was_tail);
        owner.next.store(after, Ordering::Relaxed);
        cand.next.store(ptr::null_mut(), Ordering::Relaxed);
        if sec_head.is_null() {
            owner.sec_head.store(next, Ordering::Relaxed);
        } else {
            let sec_tail = owner.sec_tail.load(Ordering::Relaxed);
            (*sec_tail).next.store(next, Ordering::Relaxed);
        }
        owner.sec_tail.store(next, Ordering::Relaxed);
        self.emit(|| {
            TraceEvent::new(thread, EventKind::Culled)
                .value(cand.id())
                .fifo(cand.fifo())
                .was_tail(was_tail)
        });
        Reorganization::Culled
    }

    unsafe fn flush_secondary(&self, owner: &QueueElement, sec_head: *mut QueueElement) {
        let sec_tail = owner.sec_tail.load(Ordering::Relaxed);
        let mut next = owner.next.load(Ordering::Acquire);
        if next.is_null() {
            let me = ptr::from_ref(owner).cast_mut();
            if self
                .tail
                .compare_exchange(me, sec_tail, Ordering::AcqRel, Ordering::Relaxed)
                .is_ok()
            {
                owner.next.store(sec_head, Ordering::Relaxed);
                owner.sec_head.store(ptr::null_mut(), Ordering::Relaxed);
                owner.sec_tail.store(ptr::null_mut(), Ordering::Relaxed);
                return;
            }
            next = wait_next(owner);
        }
        (*sec_tail).next.store(next, Ordering::Release);
        owner.next.store(sec_head, Ordering::Relaxed);
        owner.sec_head.store(ptr::null_mut(), Ordering::Relaxed);
        owner.sec_tail.store(ptr::null_mut(), Ordering::Relaxed);
    }

    /// # Safety
    ///
    /// The caller must hold the lock through `owner`.
    pub unsafe fn release_with(&self, owner: &QueueElement) {
        owner.touch();
        let sec_head = owner.sec_head.load(Ordering::Relaxed);
        let sec_tail = owner.sec_tail.load(Ordering::Relaxed);
        let preferred = owner.preferred.load(Ordering::Relaxed);
        let me = ptr::from_ref(owner).cast_mut();

        let next = owner.next.load(Ordering::Acquire);
        if !next.is_null() {
            grant(&*next, sec_head, sec_tail, preferred);
            return;
        }
        if !sec_head.is_null() {
            if self
                .tail
                .compare_exchange(me, sec_tail, Ordering::AcqRel, Ordering::Relaxed)
                .is_err()
            {
                let late = wait_next(owner);
                (*sec_tail).next.store(late, Ordering::Release);
            }
            let head = &*sec_head;
            grant(head, ptr::null_mut(), ptr::null_mut(), head.numa_id());
            return;
        }
        if self
            .tail
            .compare_exchange(me, ptr::null_mut(), Ordering::Release, Ordering::Relaxed)
            .is_ok()
        {
            return;
        }
        let late = wait_next(owner);
        grant(&*late, ptr::null_mut(), ptr::null_mut(), preferred);
    }
}

/// Copies the carriage into `to` and hands it ownership.
unsafe fn grant(
    to: &QueueElement,
    sec_head: *mut QueueElement,
    sec_tail: *mut QueueElement,
    preferred: u32,
) {
    to.touch();
    to.sec_head.store(sec_head, Ordering::Relaxed);
    to.sec_tail.store(sec_tail, Ordering::Relaxed);
    to.preferred.store(preferred, Ordering::Relaxed);
    to.granted.store(true, Ordering::Release);
}

impl RawLock for CnaLock {
    fn acquire(&self, ctx: &mut ThreadContext) {
        let id = ctx.next_element_id();
        let numa = ctx.numa_id();
        let thread = ctx.index();
        let elem = ctx.pool.take();
        // SAFETY: the pooled element is ours until release hands it back.
        unsafe {
            (*elem).prepare(id, numa, false);
            self.acquire_with(&*elem, &mut ctx.rng, thread);
        }
        self.holder.store(elem, Ordering::Relaxed);
    }

    unsafe fn release(&self, ctx: &mut ThreadContext) {
        let elem = self.holder.load(Ordering::Relaxed);
        debug_assert!(!elem.is_null(), "release of a CNA lock that is not held");
        self.release_with(&*elem);
        ctx.pool.give_back(elem);
    }

    fn kind(&self) -> LockKind {
        LockKind::Cna
    }
}

#[doc(hidden)]
pub mod fixture;
