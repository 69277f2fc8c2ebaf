//! Spin hints, bounded busy-wait helpers and truncated randomized
//! exponential back-off.

use std::hint;
use std::thread;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// Upper bound on a back-off delay, in spin hints.
pub const BACKOFF_CAP: u32 = 100_000;

/// Initial back-off ceiling, in spin hints.
pub const BACKOFF_INITIAL: u32 = 1;

/// Number of consecutive spin hints a waiter issues before it offers its
/// CPU back to the scheduler. Waiting is still busy-waiting (no parking),
/// but oversubscribed runs would otherwise stall for a full time slice on
/// every handover to a descheduled thread.
pub const YIELD_INTERVAL: u32 = 64;

/// Issues one processor spin-wait hint (`PAUSE` on x86).
#[inline(always)]
pub fn spin_hint() {
    hint::spin_loop();
}

/// Busy-wait loop state for local spinning on a flag.
#[derive(Debug, Default)]
pub struct SpinWait {
    spins: u32,
}

impl SpinWait {
    #[inline]
    pub const fn new() -> Self {
        Self { spins: 0 }
    }

    /// One iteration of a wait loop.
    #[inline]
    pub fn spin(&mut self) {
        self.spins = self.spins.wrapping_add(1);
        if self.spins.is_multiple_of(YIELD_INTERVAL) {
            thread::yield_now();
        } else {
            spin_hint();
        }
    }

    /// Iterations executed so far.
    pub fn count(&self) -> u32 {
        self.spins
    }
}

/// Spins for `n` hints, yielding every [`YIELD_INTERVAL`] hints.
pub fn delay(n: u32) {
    let mut w = SpinWait::new();
    for _ in 0..n {
        w.spin();
    }
}

/// Truncated randomized binary exponential back-off.
///
/// Each failed attempt delays a uniformly random number of spin hints in
/// `[0, ceiling)` and then doubles the ceiling, saturating at
/// [`BACKOFF_CAP`].
#[derive(Debug, Clone)]
pub struct Backoff {
    ceiling: u32,
    rng: SmallRng,
}

impl Backoff {
    pub fn new(seed: u64) -> Self {
        Self {
            ceiling: BACKOFF_INITIAL,
            rng: SmallRng::seed_from_u64(seed),
        }
    }

    pub fn ceiling(&self) -> u32 {
        self.ceiling
    }

    /// Starts a new contended episode.
    pub fn reset(&mut self) {
        self.ceiling = BACKOFF_INITIAL;
    }

    /// Draws the next delay and advances the ceiling without spinning.
    pub fn next_delay(&mut self) -> u32 {
        let d = self.rng.random_range(0..self.ceiling);
        self.ceiling = self.ceiling.saturating_mul(2).min(BACKOFF_CAP);
        d
    }

    /// Delays after a failed attempt.
    pub fn back_off(&mut self) {
        let d = self.next_delay();
        delay(d);
    }

    #[cfg(test)]
    pub(crate) fn set_ceiling(&mut self, c: u32) {
        self.ceiling = c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::{Duration, Instant};

    #[test]
    fn zero_hints_is_noop() {
        delay(0);
    }

    #[test]
    fn hundred_thousand_hints_are_bounded() {
        let t = Instant::now();
        for _ in 0..100_000 {
            spin_hint();
        }
        assert!(t.elapsed() < Duration::from_millis(100));
    }

    #[test]
    fn ceiling_doubles_then_saturates() {
        let mut b = Backoff::new(1);
        assert_eq!(b.ceiling(), 1);
        assert_eq!(b.next_delay(), 0);
        assert_eq!(b.ceiling(), 2);
        b.set_ceiling(8);
        let d = b.next_delay();
        assert!(d < 8);
        assert_eq!(b.ceiling(), 16);
        b.set_ceiling(BACKOFF_CAP);
        assert!(b.next_delay() < BACKOFF_CAP);
        assert_eq!(b.ceiling(), BACKOFF_CAP);
        b.set_ceiling(70_000);
        b.next_delay();
        assert_eq!(b.ceiling(), BACKOFF_CAP);
    }

    #[test]
    fn ceiling_is_nondecreasing_within_episode() {
        let mut b = Backoff::new(7);
        let mut last = b.ceiling();
        for _ in 0..40 {
            b.next_delay();
            assert!(b.ceiling() >= last);
            assert!(b.ceiling() <= BACKOFF_CAP);
            last = b.ceiling();
        }
    }

    #[test]
    fn delays_uniform_on_ceiling_eight() {
        // chi-squared, 7 degrees of freedom, alpha = 0.01 critical value
        const CRIT: f64 = 18.475;
        const N: usize = 40_000;
        let mut b = Backoff::new(0xfeed);
        let mut bins = [0usize; 8];
        for _ in 0..N {
            b.set_ceiling(8);
            bins[b.next_delay() as usize] += 1;
        }
        let expected = N as f64 / 8.0;
        let chi: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi < CRIT, "chi^2 = {chi}, bins = {bins:?}");
    }
}
