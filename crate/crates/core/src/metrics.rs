//! Lock clock, wait samples, and the fairness / migration statistics.
//!
//! Ratios that can be unbounded (spread with a starved thread, migration
//! reciprocal with no migrations) are reported as `f64::INFINITY`.

use std::sync::atomic::{AtomicU64, Ordering};

/// Shared counter advanced once per critical section. Read before
/// acquiring; read and advanced inside the critical section only.
#[derive(Debug, Default)]
pub struct LockClock(AtomicU64);

impl LockClock {
    pub const fn new() -> Self {
        Self(AtomicU64::new(0))
    }

    /// Value observed immediately before acquiring.
    #[inline]
    pub fn read(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    /// Inside the critical section: computes the wait since `pre` and
    /// advances the clock by one acquisition.
    #[inline]
    pub fn observe_then_advance(&self, pre: u64) -> u64 {
        let now = self.0.load(Ordering::Relaxed);
        self.0.store(now + 1, Ordering::Relaxed);
        now.saturating_sub(pre)
    }
}

/// One wait observation, in lock acquisitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaitSample {
    pub wait: u32,
    pub thread: u16,
    pub fifo: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MigrationTally {
    pub acquisitions: u64,
    pub migrations: u64,
    last_node: Option<u32>,
}

impl MigrationTally {
    /// Records an acquisition by a thread on `node`.
    #[inline]
    pub fn record(&mut self, node: u32) {
        self.acquisitions += 1;
        if self.last_node.is_some_and(|n| n != node) {
            self.migrations += 1;
        }
        self.last_node = Some(node);
    }

    pub fn from_counts(acquisitions: u64, migrations: u64) -> Self {
        assert!(migrations <= acquisitions);
        Self {
            acquisitions,
            migrations,
            last_node: None,
        }
    }
}

/// Max over min of per-thread completed iterations. Infinite if any
/// thread completed none.
pub fn spread(counts: &[u64]) -> f64 {
    assert!(!counts.is_empty(), "spread of an empty set");
    let max = *counts.iter().max().unwrap();
    let min = *counts.iter().min().unwrap();
    if min == 0 {
        return f64::INFINITY;
    }
    max as f64 / min as f64
}

/// Acquisitions per NUMA migration. Infinite without migrations.
pub fn migration_reciprocal(t: &MigrationTally) -> f64 {
    if t.migrations == 0 {
        return f64::INFINITY;
    }
    t.acquisitions as f64 / t.migrations as f64
}

fn mean<T: Copy + Into<f64>>(xs: &[T]) -> f64 {
    xs.iter().map(|&x| x.into()).sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation over the mean. 0 for fewer than two samples
/// or a zero mean.
pub fn rstddev<T: Copy + Into<f64>>(xs: &[T]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    if m == 0.0 {
        return 0.0;
    }
    let ss: f64 = xs.iter().map(|&x| (x.into() - m).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt() / m
}

/// Theil-T index normalized by `ln n` into `[0, 1]`: 0 when all samples
/// are equal, 1 when a single sample holds the whole total.
pub fn theil_t<T: Copy + Into<f64>>(xs: &[T]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    if m <= 0.0 {
        return 0.0;
    }
    let t: f64 = xs
        .iter()
        .map(|&x| {
            let r = x.into() / m;
            if r > 0.0 {
                r * r.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n as f64;
    (t / (n as f64).ln()).clamp(0.0, 1.0)
}

/// Median with the two middle values averaged for even lengths. Sorts
/// `xs` in place; infinities sort last.
pub fn median(xs: &mut [f64]) -> f64 {
    assert!(!xs.is_empty(), "median of an empty set");
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        let (a, b) = (xs[n / 2 - 1], xs[n / 2]);
        if a == b {
            a
        } else {
            (a + b) / 2.0
        }
    }
}

/// Summary of one group's wait times.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaitStats {
    pub count: u64,
    pub rstddev: f64,
    pub theil_t: f64,
    pub worst: f64,
    pub avg: f64,
    pub median: f64,
}

impl WaitStats {
    pub fn from_waits(waits: &[u32]) -> Self {
        if waits.is_empty() {
            return Self::default();
        }
        let mut sorted: Vec<f64> = waits.iter().map(|&w| f64::from(w)).collect();
        Self {
            count: waits.len() as u64,
            rstddev: rstddev(waits),
            theil_t: theil_t(waits),
            worst: f64::from(*waits.iter().max().unwrap()),
            avg: mean(waits),
            median: median(&mut sorted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clock_waits() {
        let c = LockClock::new();
        let pre = c.read();
        assert_eq!(c.observe_then_advance(pre), 0);
        let pre = c.read();
        c.observe_then_advance(c.read());
        c.observe_then_advance(c.read());
        assert_eq!(c.observe_then_advance(pre), 2);
        assert_eq!(c.read(), 4);
    }

    #[test]
    fn spread_examples() {
        assert_eq!(spread(&[100, 100]), 1.0);
        assert!((spread(&[790, 100]) - 7.9).abs() < 1e-12);
        assert_eq!(spread(&[5, 0]), f64::INFINITY);
    }

    #[test]
    fn migration_examples() {
        assert_eq!(
            migration_reciprocal(&MigrationTally::from_counts(1000, 0)),
            f64::INFINITY
        );
        assert_eq!(
            migration_reciprocal(&MigrationTally::from_counts(374, 1)),
            374.0
        );
        let mut t = MigrationTally::default();
        for i in 0..1000u32 {
            t.record(i % 2);
        }
        assert!((migration_reciprocal(&t) - 1000.0 / 999.0).abs() < 1e-12);
        let mut pairs = MigrationTally::default();
        for i in 0..1000u32 {
            pairs.record((i / 2) % 2);
        }
        assert!((migration_reciprocal(&pairs) - 2.0).abs() < 0.01);
    }

    #[test]
    fn rstddev_examples() {
        assert_eq!(rstddev(&[5u32, 5, 5]), 0.0);
        assert!((rstddev(&[1u32, 3]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(rstddev(&[0u32, 0, 0]), 0.0);
        let mut heavy = vec![0u32; 10_000];
        heavy[0] = 1_000_000;
        assert!(rstddev(&heavy) > 10.0);
    }

    #[test]
    fn theil_examples() {
        assert_eq!(theil_t(&[4u32, 4, 4, 4]), 0.0);
        assert!((theil_t(&[0u32, 0, 0, 12]) - 1.0).abs() < 1e-12);
        assert_eq!(theil_t(&[0u32, 0]), 0.0);
        assert_eq!(theil_t(&[7u32]), 0.0);
    }

    #[test]
    fn theil_monotone_under_concentration() {
        // Every 4-element vector with total 8: moving one unit from a
        // smaller entry to a larger-or-equal one never lowers the index.
        for a in 0..=8u32 {
            for b in 0..=8 - a {
                for c in 0..=8 - a - b {
                    let v = [a, b, c, 8 - a - b - c];
                    for i in 0..4 {
                        for j in 0..4 {
                            if i != j && v[i] > 0 && v[j] >= v[i] {
                                let mut w = v;
                                w[i] -= 1;
                                w[j] += 1;
                                assert!(theil_t(&w) >= theil_t(&v) - 1e-12, "{v:?} -> {w:?}");
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [1.0, 2.0, 9.0]), 2.0);
        assert_eq!(median(&mut [9.0, f64::INFINITY, 1.0]), 9.0);
        assert_eq!(median(&mut [1.0, 3.0]), 2.0);
        assert_eq!(median(&mut [f64::INFINITY, f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn wait_stats() {
        let s = WaitStats::from_waits(&[24, 25, 26, 29, 20]);
        assert_eq!(s.worst, 29.0);
        assert_eq!(s.median, 25.0);
        assert!((s.avg - 24.8).abs() < 1e-12);
        assert_eq!(WaitStats::from_waits(&[]).count, 0);
    }

    proptest! {
        #[test]
        fn spread_at_least_one(v in proptest::collection::vec(1u64..1000, 1..20)) {
            prop_assert!(spread(&v) >= 1.0);
        }

        #[test]
        fn scale_invariance(v in proptest::collection::vec(0.0f64..1e3, 2..50), c in 1e-3f64..1e3) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let s: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((theil_t(&v) - theil_t(&s)).abs() < 1e-9);
            prop_assert!((rstddev(&v) - rstddev(&s)).abs() < 1e-9 * rstddev(&v).max(1.0));
        }
    }
}
