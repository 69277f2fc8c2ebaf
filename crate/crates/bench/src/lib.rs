//! Helpers shared by the criterion benchmarks.

use std::sync::Arc;
use std::thread;

use fissile_core::{with_lock, LockKind, LockParams, RawLock, ThreadContext, TopologyMap};

pub fn build(kind: LockKind) -> Box<dyn RawLock> {
    kind.build(&LockParams::default())
}

/// `iters` uncontended acquire/release pairs on one thread.
pub fn uncontended(lock: &dyn RawLock, ctx: &mut ThreadContext, iters: u64) {
    for _ in 0..iters {
        with_lock(lock, ctx, || ());
    }
}

/// Runs `threads` threads, each doing `per_thread` acquisitions of `lock`,
/// and returns the total.
pub fn contended(lock: &dyn RawLock, threads: u32, per_thread: u64) -> u64 {
    let topo = Arc::new(TopologyMap::synthetic(2).expect("two nodes"));
    thread::scope(|s| {
        let hs: Vec<_> = (0..threads)
            .map(|t| {
                let topo = topo.clone();
                s.spawn(move || {
                    let mut ctx = ThreadContext::new(t, topo, u64::from(t) + 1);
                    uncontended(lock, &mut ctx, per_thread);
                    per_thread
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).sum()
    })
}
