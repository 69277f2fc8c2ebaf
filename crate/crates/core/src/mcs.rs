//! Classic MCS queue lock.
//!
//! The raw `*_with` entry points take the caller's queue element. The
//! [`RawLock`] implementation draws an element from the thread's pool and
//! parks its address in a holder slot inside the lock so the release side
//! can find it; that slot is only touched by the owner.

use std::ptr;
use std::sync::atomic::{AtomicPtr, Ordering};

use crate::element::QueueElement;
use crate::lock::{CachePadded, LockKind, RawLock, ThreadContext};
use crate::spin::SpinWait;

/// Swaps `elem` into `tail`, returning the predecessor (null if none).
#[inline]
pub(crate) fn swap_tail(
    tail: &AtomicPtr<QueueElement>,
    elem: *const QueueElement,
) -> *mut QueueElement {
    tail.swap(elem.cast_mut(), Ordering::AcqRel)
}

/// Waits for `elem.granted`.
#[inline]
pub(crate) fn wait_granted(elem: &QueueElement) {
    let mut w = SpinWait::new();
    while !elem.granted.load(Ordering::Acquire) {
        w.spin();
    }
}

/// Waits until a late arrival has linked itself behind `elem`.
#[inline]
pub(crate) fn wait_next(elem: &QueueElement) -> *mut QueueElement {
    let mut w = SpinWait::new();
    loop {
        let n = elem.next.load(Ordering::Acquire);
        if !n.is_null() {
            return n;
        }
        w.spin();
    }
}

#[derive(Debug, Default)]
pub struct McsLock {
    tail: CachePadded<AtomicPtr<QueueElement>>,
    holder: CachePadded<AtomicPtr<QueueElement>>,
}

// SAFETY: the raw pointers are only dereferenced under the MCS protocol.
unsafe impl Send for McsLock {}
unsafe impl Sync for McsLock {}

impl McsLock {
    pub const fn new() -> Self {
        Self {
            tail: CachePadded(AtomicPtr::new(ptr::null_mut())),
            holder: CachePadded(AtomicPtr::new(ptr::null_mut())),
        }
    }

    /// True when nobody holds or waits on the lock.
    pub fn is_quiescent(&self) -> bool {
        self.tail.load(Ordering::Acquire).is_null()
    }

    /// First half of an acquire: appends `elem`, returning the predecessor.
    ///
    /// # Safety
    ///
    /// `elem` must be prepared, stay alive and unmoved until released, and
    /// the caller must follow up with [`McsLock::link`] when a predecessor
    /// is returned.
    pub unsafe fn enqueue(&self, elem: &QueueElement) -> *mut QueueElement {
        swap_tail(&self.tail, elem)
    }

    /// Second half of an acquire: publishes `elem` to its predecessor and
    /// waits for ownership.
    ///
    /// # Safety
    ///
    /// `pred` must be the value returned by the matching [`McsLock::enqueue`].
    pub unsafe fn link(&self, pred: *mut QueueElement, elem: &QueueElement) {
        if pred.is_null() {
            return;
        }
        (*pred).touch();
        (*pred)
            .next
            .store(ptr::from_ref(elem).cast_mut(), Ordering::Release);
        wait_granted(elem);
    }

    /// # Safety
    ///
    /// `elem` must be a freshly prepared element that outlives the matching
    /// [`McsLock::release_with`].
    pub unsafe fn acquire_with(&self, elem: &QueueElement) {
        let pred = self.enqueue(elem);
        self.link(pred, elem);
    }

    /// # Safety
    ///
    /// The caller must hold the lock through `elem`.
    pub unsafe fn release_with(&self, elem: &QueueElement) {
        let mut next = elem.next.load(Ordering::Acquire);
        if next.is_null() {
            let me = ptr::from_ref(elem).cast_mut();
            if self
                .tail
                .compare_exchange(me, ptr::null_mut(), Ordering::Release, Ordering::Relaxed)
                .is_ok()
            {
                return;
            }
            next = wait_next(elem);
        }
        (*next).touch();
        (*next).granted.store(true, Ordering::Release);
    }
}

impl RawLock for McsLock {
    fn acquire(&self, ctx: &mut ThreadContext) {
        let id = ctx.next_element_id();
        let numa = ctx.numa_id();
        let elem = ctx.pool.take();
        // SAFETY: pooled elements are heap allocated and exclusively ours
        // until handed back in release.
        unsafe {
            (*elem).prepare(id, numa, false);
            self.acquire_with(&*elem);
        }
        self.holder.store(elem, Ordering::Relaxed);
    }

    unsafe fn release(&self, ctx: &mut ThreadContext) {
        let elem = self.holder.load(Ordering::Relaxed);
        debug_assert!(!elem.is_null(), "release of an MCS lock that is not held");
        self.release_with(&*elem);
        ctx.pool.give_back(elem);
    }

    fn kind(&self) -> LockKind {
        LockKind::Mcs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicBool, AtomicUsize};
    use std::sync::{Arc, Mutex};
    use std::thread;

    #[test]
    fn uncontended_acquire_release() {
        let l = McsLock::new();
        let e = QueueElement::default();
        unsafe {
            l.acquire_with(&e);
            assert_eq!(l.tail.load(Ordering::Relaxed), ptr::from_ref(&e).cast_mut());
            l.release_with(&e);
        }
        assert!(l.is_quiescent());
    }

    #[test]
    fn waiter_is_granted_on_release() {
        let l = McsLock::new();
        let a = QueueElement::default();
        let b = QueueElement::default();
        unsafe {
            l.acquire_with(&a);
            let pred = l.enqueue(&b);
            assert_eq!(pred, ptr::from_ref(&a).cast_mut());
            (*pred)
                .next
                .store(ptr::from_ref(&b).cast_mut(), Ordering::Release);
            l.release_with(&a);
            assert!(b.is_granted());
            l.release_with(&b);
        }
        assert!(l.is_quiescent());
    }

    #[test]
    fn release_waits_for_late_link() {
        let l = Arc::new(McsLock::new());
        let a = Arc::new(QueueElement::default());
        let b = Arc::new(QueueElement::default());
        unsafe { l.acquire_with(&a) };
        // B swaps itself in but has not linked yet.
        let pred = unsafe { l.enqueue(&b) };
        let released = Arc::new(AtomicBool::new(false));
        let h = {
            let (l, a, released) = (l.clone(), a.clone(), released.clone());
            thread::spawn(move || {
                unsafe { l.release_with(&a) };
                released.store(true, Ordering::SeqCst);
            })
        };
        thread::sleep(std::time::Duration::from_millis(20));
        assert!(
            !released.load(Ordering::SeqCst),
            "release must wait for the link"
        );
        unsafe { l.link(pred, &b) };
        h.join().unwrap();
        assert!(b.is_granted());
        unsafe { l.release_with(&b) };
        assert!(l.is_quiescent());
    }

    #[test]
    fn fifo_service_order() {
        let l = Arc::new(McsLock::new());
        let holder = QueueElement::default();
        unsafe { l.acquire_with(&holder) };
        let order = Arc::new(Mutex::new(Vec::new()));
        let enqueued = Arc::new(AtomicUsize::new(0));
        let mut handles = Vec::new();
        for name in 0..3u32 {
            while enqueued.load(Ordering::SeqCst) != name as usize {
                thread::yield_now();
            }
            let (l, order, enqueued) = (l.clone(), order.clone(), enqueued.clone());
            handles.push(thread::spawn(move || {
                let e = QueueElement::default();
                unsafe {
                    let pred = l.enqueue(&e);
                    enqueued.fetch_add(1, Ordering::SeqCst);
                    l.link(pred, &e);
                    order.lock().unwrap().push(name);
                    l.release_with(&e);
                }
            }));
        }
        while enqueued.load(Ordering::SeqCst) != 3 {
            thread::yield_now();
        }
        unsafe { l.release_with(&holder) };
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(*order.lock().unwrap(), vec![0, 1, 2]);
        assert!(l.is_quiescent());
    }

    #[test]
    fn pooled_contract_returns_elements() {
        let l = McsLock::new();
        let mut ctx = ThreadContext::simple(0);
        for _ in 0..10 {
            l.acquire(&mut ctx);
            unsafe { l.release(&mut ctx) };
        }
        assert_eq!(ctx.pool.len(), 1);
        assert!(l.is_quiescent());
    }
}
