//! Test-and-set lock word and the polite TTS baseline lock.

use std::sync::atomic::{AtomicU32, Ordering};

use crate::lock::{CachePadded, LockKind, RawLock, ThreadContext};
use crate::spin::SpinWait;

pub const UNLOCKED: u32 = 0;
pub const LOCKED: u32 = 1;
/// Smallest value that cues a direct handoff to the alpha thread.
pub const HANDOFF: u32 = 2;

/// Outer lock word: 0 unlocked, 1 locked, any even value >= 2 a pending
/// direct handoff. Without FIFO waiters the handoff value is exactly 2.
#[derive(Debug, Default)]
pub struct TriStateWord(AtomicU32);

#[inline(always)]
fn check_domain(v: u32) -> u32 {
    debug_assert!(
        v == LOCKED || v.is_multiple_of(2),
        "lock word out of domain: {v}"
    );
    v
}

impl TriStateWord {
    pub const fn new() -> Self {
        Self(AtomicU32::new(UNLOCKED))
    }

    pub fn load(&self, order: Ordering) -> u32 {
        check_domain(self.0.load(order))
    }

    /// One atomic attempt to move 0 to 1. Any other observed value is left
    /// untouched, including a pending handoff.
    #[inline]
    pub fn try_acquire(&self) -> bool {
        self.0
            .compare_exchange(UNLOCKED, LOCKED, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    /// Impolite swap of 1 into the word, returning the previous value. A
    /// previous value of 0 means the lock was won; >= 2 means a handoff was
    /// taken (only the alpha may call this while a handoff can be pending).
    #[inline]
    pub fn swap_locked(&self) -> u32 {
        check_domain(self.0.swap(LOCKED, Ordering::Acquire))
    }

    /// Stores `value` with release ordering. The caller must hold the lock.
    #[inline]
    pub fn release(&self, value: u32) {
        self.0.store(check_domain(value), Ordering::Release);
    }
}

/// Polite test-and-test-and-set lock with truncated randomized binary
/// exponential back-off.
#[derive(Debug, Default)]
pub struct TtsLock {
    word: CachePadded<TriStateWord>,
}

impl TtsLock {
    pub const fn new() -> Self {
        Self {
            word: CachePadded(TriStateWord::new()),
        }
    }

    pub fn word(&self) -> &TriStateWord {
        &self.word
    }
}

impl RawLock for TtsLock {
    fn acquire(&self, ctx: &mut ThreadContext) {
        ctx.backoff.reset();
        loop {
            let mut w = SpinWait::new();
            while self.word.load(Ordering::Relaxed) != UNLOCKED {
                w.spin();
            }
            if self.word.try_acquire() {
                return;
            }
            ctx.backoff.back_off();
        }
    }

    unsafe fn release(&self, _ctx: &mut ThreadContext) {
        self.word.release(UNLOCKED);
    }

    fn kind(&self) -> LockKind {
        LockKind::Tts
    }
}
