//! A frozen CNA queue for exercising [`CnaLock::reorganize`] from a single
//! thread: an owner holding the lock, waiters already linked behind it, and
//! an optional secondary chain. Nobody spins, so every step is
//! deterministic given the flush outcomes.

use super::*;

pub struct Chain {
    lock: CnaLock,
    owner: Box<QueueElement>,
    // Kept alive for the raw links; boxed so addresses stay put.
    #[allow(clippy::vec_box)]
    _nodes: Vec<Box<QueueElement>>,
}

impl Chain {
    /// `waiters` are `(numa node, fifo)` in queue order; `secondary` lists
    /// the nodes of already-culled waiters.
    pub fn new(
        flush: Probability,
        owner_node: u32,
        waiters: &[(u32, bool)],
        secondary: &[u32],
    ) -> Self {
        let lock = CnaLock::with_flush(flush);
        let owner = Box::new(QueueElement::new(0, owner_node, false));
        assert!(swap_tail(&lock.tail, &*owner).is_null());
        let mut nodes = Vec::new();
        for (i, &(n, f)) in waiters.iter().enumerate() {
            let w = Box::new(QueueElement::new(1 + i as u64, n, f));
            let pred = swap_tail(&lock.tail, &*w);
            // SAFETY: `pred` is the owner or an earlier boxed waiter.
            unsafe {
                (*pred)
                    .next
                    .store(ptr::from_ref(&*w).cast_mut(), Ordering::Release)
            };
            nodes.push(w);
        }
        let mut prev: *mut QueueElement = ptr::null_mut();
        for (i, &n) in secondary.iter().enumerate() {
            let s = Box::new(QueueElement::new(1_000_000 + i as u64, n, false));
            let p = ptr::from_ref(&*s).cast_mut();
            if prev.is_null() {
                owner.sec_head.store(p, Ordering::Relaxed);
            } else {
                // SAFETY: `prev` is an earlier boxed element.
                unsafe { (*prev).next.store(p, Ordering::Relaxed) };
            }
            owner.sec_tail.store(p, Ordering::Relaxed);
            prev = p;
            nodes.push(s);
        }
        Self {
            lock,
            owner,
            _nodes: nodes,
        }
    }

    pub fn has_secondary(&self) -> bool {
        !self.owner.sec_head.load(Ordering::Relaxed).is_null()
    }

    /// One reorganization step with a flush trial drawn from `rng`.
    pub fn reorganize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Reorganization {
        // SAFETY: the owner holds the lock and no other thread touches the
        // queue.
        unsafe { self.lock.reorganize_with_rng(&self.owner, rng, 0) }
    }

    fn walk(mut p: *mut QueueElement) -> Vec<(u64, u32)> {
        let mut out = Vec::new();
        while !p.is_null() {
            // SAFETY: every linked element is owned by this fixture.
            unsafe {
                out.push(((*p).id(), (*p).numa_id()));
                p = (*p).next.load(Ordering::Relaxed);
            }
        }
        out
    }

    /// `(id, node)` of the primary waiters in queue order.
    pub fn primary(&self) -> Vec<(u64, u32)> {
        Self::walk(self.owner.next.load(Ordering::Relaxed))
    }

    pub fn secondary(&self) -> Vec<(u64, u32)> {
        Self::walk(self.owner.sec_head.load(Ordering::Relaxed))
    }
}
