//! MCS/CNA queue elements.

use std::ptr;
use std::sync::atomic::{AtomicBool, AtomicPtr, AtomicU32, AtomicU64, Ordering};

#[cfg(debug_assertions)]
static POISON_HITS: AtomicU64 = AtomicU64::new(0);

/// Number of accesses to retired (poisoned) queue elements observed since
/// process start. Always 0 in builds without debug assertions, where the
/// check is compiled out.
pub fn poison_hits() -> u64 {
    #[cfg(debug_assertions)]
    {
        POISON_HITS.load(Ordering::SeqCst)
    }
    #[cfg(not(debug_assertions))]
    {
        0
    }
}

/// Whether retired-element accesses are being detected in this build.
pub const POISON_CHECKS: bool = cfg!(debug_assertions);

/// One waiter's node in an MCS or CNA chain.
///
/// Only `next` and `granted` are written concurrently. Every other field is
/// written by one party before a publishing release (the tail swap for the
/// enqueuer's own fields, the `granted` store for carriage written by the
/// grantor) and read after the matching acquire, so relaxed accesses
/// suffice for them.
#[repr(align(128))]
#[derive(Debug)]
pub struct QueueElement {
    pub(crate) next: AtomicPtr<QueueElement>,
    pub(crate) granted: AtomicBool,
    numa_id: AtomicU32,
    fifo: AtomicBool,
    id: AtomicU64,
    // CNA carriage: secondary chain and, for FIFO owners, the inherited
    // preferred node.
    pub(crate) sec_head: AtomicPtr<QueueElement>,
    pub(crate) sec_tail: AtomicPtr<QueueElement>,
    pub(crate) preferred: AtomicU32,
    #[cfg(debug_assertions)]
    poisoned: AtomicBool,
}

impl Default for QueueElement {
    fn default() -> Self {
        Self::new(0, 0, false)
    }
}

impl QueueElement {
    pub fn new(id: u64, numa_id: u32, fifo: bool) -> Self {
        Self {
            next: AtomicPtr::new(ptr::null_mut()),
            granted: AtomicBool::new(false),
            numa_id: AtomicU32::new(numa_id),
            fifo: AtomicBool::new(fifo),
            id: AtomicU64::new(id),
            sec_head: AtomicPtr::new(ptr::null_mut()),
            sec_tail: AtomicPtr::new(ptr::null_mut()),
            preferred: AtomicU32::new(numa_id),
            #[cfg(debug_assertions)]
            poisoned: AtomicBool::new(false),
        }
    }

    /// Re-arms a pooled element for a new enqueue episode.
    pub fn prepare(&self, id: u64, numa_id: u32, fifo: bool) {
        self.next.store(ptr::null_mut(), Ordering::Relaxed);
        self.granted.store(false, Ordering::Relaxed);
        self.numa_id.store(numa_id, Ordering::Relaxed);
        self.fifo.store(fifo, Ordering::Relaxed);
        self.id.store(id, Ordering::Relaxed);
        self.sec_head.store(ptr::null_mut(), Ordering::Relaxed);
        self.sec_tail.store(ptr::null_mut(), Ordering::Relaxed);
        self.preferred.store(numa_id, Ordering::Relaxed);
        #[cfg(debug_assertions)]
        self.poisoned.store(false, Ordering::Relaxed);
    }

    pub fn numa_id(&self) -> u32 {
        self.touch();
        self.numa_id.load(Ordering::Relaxed)
    }

    pub fn fifo(&self) -> bool {
        self.touch();
        self.fifo.load(Ordering::Relaxed)
    }

    pub fn id(&self) -> u64 {
        self.id.load(Ordering::Relaxed)
    }

    pub fn is_granted(&self) -> bool {
        self.granted.load(Ordering::Acquire)
    }

    /// Marks the element retired. Any protocol access after this point is
    /// counted by [`poison_hits`].
    pub fn poison(&self) {
        #[cfg(debug_assertions)]
        self.poisoned.store(true, Ordering::SeqCst);
    }

    #[inline(always)]
    pub(crate) fn touch(&self) {
        #[cfg(debug_assertions)]
        if self.poisoned.load(Ordering::Relaxed) {
            POISON_HITS.fetch_add(1, Ordering::SeqCst);
        }
    }
}

/// Per-thread free list of heap-allocated elements for locks whose element
/// must outlive the acquire call (baseline MCS and CNA).
#[derive(Debug, Default)]
pub struct ElementPool {
    // Boxed: handed out as raw pointers that must survive pool growth.
    #[allow(clippy::vec_box)]
    free: Vec<Box<QueueElement>>,
}

impl ElementPool {
    pub fn take(&mut self) -> *mut QueueElement {
        let b = self.free.pop().unwrap_or_default();
        Box::into_raw(b)
    }

    /// # Safety
    ///
    /// `elem` must have come from [`ElementPool::take`] on any pool and must
    /// no longer be reachable from any lock.
    pub unsafe fn give_back(&mut self, elem: *mut QueueElement) {
        self.free.push(Box::from_raw(elem));
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_is_padded() {
        assert_eq!(std::mem::align_of::<QueueElement>(), 128);
    }

    #[test]
    fn pool_recycles() {
        let mut pool = ElementPool::default();
        let a = pool.take();
        unsafe { pool.give_back(a) };
        assert_eq!(pool.len(), 1);
        let b = pool.take();
        assert_eq!(a, b);
        assert!(pool.is_empty());
        unsafe { pool.give_back(b) };
    }

    #[cfg(debug_assertions)]
    #[test]
    fn poisoned_access_is_counted() {
        let e = QueueElement::new(1, 0, false);
        let before = poison_hits();
        e.numa_id();
        e.poison();
        e.numa_id();
        assert!(poison_hits() > before);
        e.prepare(2, 0, false);
    }
}
