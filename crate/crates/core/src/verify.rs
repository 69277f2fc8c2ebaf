//! Correctness checks driven by real threads and the trace hook.
//!
//! * exclusion: unguarded counter, `threads x iterations` increments;
//! * alpha uniqueness: at most one thread ever spins on the outer word;
//! * bounded bypass: a release that publishes a handoff value is followed
//!   by the alpha taking the handoff, and an impatience episode sees at
//!   most one release that raced past it;
//! * FIFO order: no inner-lock grant goes to a request that enqueued
//!   strictly after a still-waiting FIFO request;
//! * element lifetime: no access to a retired queue element.

use std::cell::UnsafeCell;
use std::collections::HashMap;
use std::fmt;
use std::hint::black_box;
use std::sync::Arc;
use std::thread;

use crate::element::{poison_hits, POISON_CHECKS};
use crate::fissile::FissileLock;
use crate::harness::{BenchConfig, BenchError};
use crate::lock::{with_lock, LockKind, RawLock, ThreadContext};
use crate::topology::TopologyMap;
use crate::trace::{EventKind, TraceEvent, TraceLog};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    /// `None` when the check does not apply to this configuration.
    pub passed: Option<bool>,
    pub detail: String,
    pub counterexample: Vec<TraceEvent>,
}

impl CheckOutcome {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: Some(true),
            detail,
            counterexample: Vec::new(),
        }
    }

    fn fail(name: &'static str, detail: String, counterexample: Vec<TraceEvent>) -> Self {
        Self {
            name,
            passed: Some(false),
            detail,
            counterexample,
        }
    }

    fn skip(name: &'static str, detail: &str) -> Self {
        Self {
            name,
            passed: None,
            detail: detail.to_owned(),
            counterexample: Vec::new(),
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub lock: LockKind,
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.passed == Some(false))
    }
}

struct Counter(UnsafeCell<u64>);

// SAFETY: only touched under the lock being verified.
unsafe impl Sync for Counter {}

/// Increments an unguarded counter from `threads` threads, `iterations`
/// times each, under `lock`. Returns the final count.
pub fn guarded_counter(
    lock: &dyn RawLock,
    threads: u32,
    fifo_threads: u32,
    iterations: u64,
    topology: &Arc<TopologyMap>,
    seed: u64,
) -> Result<u64, BenchError> {
    let counter = Counter(UnsafeCell::new(0));
    thread::scope(|s| -> Result<(), BenchError> {
        let mut hs = Vec::new();
        for t in 0..threads + fifo_threads {
            let (counter, topology) = (&counter, topology.clone());
            let h = thread::Builder::new()
                .name(format!("verify-{t}"))
                .spawn_scoped(s, move || {
                    let mut ctx = ThreadContext::new(t, topology, seed).with_fifo(t >= threads);
                    for _ in 0..iterations {
                        with_lock(lock, &mut ctx, || {
                            // SAFETY: under the lock.
                            unsafe {
                                let v = black_box(*counter.0.get());
                                *counter.0.get() = v + 1;
                            }
                        });
                    }
                })
                .map_err(BenchError::Spawn)?;
            hs.push(h);
        }
        for h in hs {
            h.join().map_err(|_| BenchError::ThreadPanicked)?;
        }
        Ok(())
    })?;
    Ok(counter.0.into_inner())
}

/// Statistics of a bounded-bypass check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BypassStats {
    pub episodes: u64,
    pub handoff_releases: u64,
    /// Episodes in which one release loaded 0 after impatience was set.
    pub raced_episodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub what: String,
    pub trace: Vec<TraceEvent>,
}

/// Checks bounded bypass over a stamp-ordered trace of one Fissile lock.
pub fn check_bounded_bypass(events: &[TraceEvent]) -> Result<BypassStats, Violation> {
    let mut stats = BypassStats::default();
    // Index of the last release that stored a handoff value, awaiting the
    // next ownership event.
    let mut pending_handoff: Option<usize> = None;
    // Open impatience episodes: thread -> (start index, zero releases seen)
    let mut open: HashMap<u32, (usize, u32)> = HashMap::new();

    for (i, e) in events.iter().enumerate() {
        match e.kind {
            EventKind::ImpatientSet => {
                stats.episodes += 1;
                open.insert(e.thread, (i, 0));
            }
            EventKind::Release => {
                if e.value >= 2 {
                    stats.handoff_releases += 1;
                    pending_handoff = Some(i);
                } else {
                    for (start, zeros) in open.values_mut() {
                        *zeros += 1;
                        if *zeros > 1 {
                            return Err(Violation {
                                what: format!(
                                    "impatience episode saw {} releases that stored 0",
                                    zeros
                                ),
                                trace: events[*start..=i].to_vec(),
                            });
                        }
                    }
                }
            }
            k if k.is_outer_ownership() => {
                if let Some(r) = pending_handoff.take() {
                    if k != EventKind::HandoffTaken {
                        return Err(Violation {
                            what: format!(
                                "release stored {} but thread {} took the lock by {}",
                                events[r].value,
                                e.thread,
                                k.as_str()
                            ),
                            trace: events[r..=i].to_vec(),
                        });
                    }
                }
                if k != EventKind::FastPathWin {
                    if let Some((_, zeros)) = open.remove(&e.thread) {
                        if zeros == 1 {
                            stats.raced_episodes += 1;
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(stats)
}

/// Checks that no inner-lock grant overtakes a FIFO request. Returns the
/// number of FIFO grants checked.
pub fn check_fifo_order(events: &[TraceEvent]) -> Result<u64, Violation> {
    // element id -> (pre-swap stamp, post-swap stamp, fifo, event index)
    let mut enq: HashMap<u64, (u64, u64, bool, usize)> = HashMap::new();
    // Latest pre-swap stamp among elements granted so far.
    let mut latest: Option<(u64, usize)> = None;
    let mut checked = 0;
    for (i, e) in events.iter().enumerate() {
        match e.kind {
            EventKind::Enqueued => {
                enq.insert(e.value, (e.pre, e.stamp, e.fifo, i));
            }
            EventKind::InnerGranted => {
                let Some(&(pre, post, fifo, at)) = enq.get(&e.value) else {
                    continue;
                };
                if fifo {
                    checked += 1;
                    if let Some((lpre, lidx)) = latest {
                        if lpre > post {
                            let mut trace = vec![events[at]];
                            trace.extend(
                                events[at + 1..=i]
                                    .iter()
                                    .filter(|x| x.value == events[lidx].value || x.value == e.value)
                                    .copied(),
                            );
                            return Err(Violation {
                                what: format!(
                                    "element {:#x} enqueued after FIFO element {:#x} but was granted first",
                                    events[lidx].value, e.value
                                ),
                                trace,
                            });
                        }
                    }
                }
                if latest.is_none_or(|(lpre, _)| pre > lpre) {
                    latest = Some((pre, at));
                }
            }
            _ => {}
        }
    }
    Ok(checked)
}

/// Runs every applicable check for `cfg.lock`.
pub fn run_verification(cfg: &BenchConfig) -> Result<VerificationReport, BenchError> {
    cfg.validate()?;
    let topology = Arc::new(
        cfg.topology
            .build()
            .map_err(crate::harness::ConfigError::from)?,
    );
    let mut checks = Vec::new();
    let poison_before = poison_hits();

    // Exclusion, untraced, full size.
    let lock = cfg.lock.build(&cfg.lock_params());
    let n = guarded_counter(
        &*lock,
        cfg.threads,
        cfg.fifo_threads,
        cfg.verify_iterations,
        &topology,
        cfg.seed,
    )?;
    let want = u64::from(cfg.total_threads()) * cfg.verify_iterations;
    checks.push(if n == want {
        CheckOutcome::pass("exclusion", format!("counter = {n}"))
    } else {
        CheckOutcome::fail(
            "exclusion",
            format!("counter = {n}, expected {want}"),
            Vec::new(),
        )
    });

    let fissile = matches!(cfg.lock, LockKind::Fissile | LockKind::FissileFifo);
    let log = Arc::new(TraceLog::new());
    if fissile {
        let lock = FissileLock::with_params(cfg.grace, cfg.flush)
            .honor_fifo(cfg.lock == LockKind::FissileFifo)
            .with_trace(log.clone());
        guarded_counter(
            &lock,
            cfg.threads,
            cfg.fifo_threads,
            cfg.trace_iterations,
            &topology,
            cfg.seed ^ 1,
        )?;
        let peak = lock.peak_alpha_spinners();
        checks.push(if peak <= 1 {
            CheckOutcome::pass("alpha-uniqueness", format!("peak outer spinners = {peak}"))
        } else {
            CheckOutcome::fail(
                "alpha-uniqueness",
                format!("{peak} threads spun on the outer word at once"),
                Vec::new(),
            )
        });
        let events = log.events();
        checks.push(match check_bounded_bypass(&events) {
            Ok(s) => CheckOutcome::pass(
                "bounded-bypass",
                format!(
                    "{} impatience episodes, {} handoff releases, {} raced by one cycle",
                    s.episodes, s.handoff_releases, s.raced_episodes
                ),
            ),
            Err(v) => CheckOutcome::fail("bounded-bypass", v.what, v.trace),
        });
        checks.push(fifo_outcome(cfg, &events));
    } else if cfg.lock == LockKind::Cna {
        let lock = crate::cna::CnaLock::with_flush(cfg.flush).with_trace(log.clone());
        guarded_counter(
            &lock,
            cfg.threads,
            cfg.fifo_threads,
            cfg.trace_iterations,
            &topology,
            cfg.seed ^ 1,
        )?;
        checks.push(CheckOutcome::skip("alpha-uniqueness", "no outer lock"));
        checks.push(CheckOutcome::skip("bounded-bypass", "no outer lock"));
        checks.push(CheckOutcome::skip("fifo-order", "lock has no FIFO support"));
    } else {
        checks.push(CheckOutcome::skip("alpha-uniqueness", "no outer lock"));
        checks.push(CheckOutcome::skip("bounded-bypass", "no outer lock"));
        checks.push(CheckOutcome::skip("fifo-order", "lock has no FIFO support"));
    }

    checks.push(if !POISON_CHECKS {
        CheckOutcome::skip("element-lifetime", "build without debug assertions")
    } else {
        let hits = poison_hits() - poison_before;
        if hits == 0 {
            CheckOutcome::pass(
                "element-lifetime",
                "no access to retired elements".to_owned(),
            )
        } else {
            CheckOutcome::fail(
                "element-lifetime",
                format!("{hits} accesses to retired queue elements"),
                Vec::new(),
            )
        }
    });

    Ok(VerificationReport {
        lock: cfg.lock,
        checks,
    })
}

fn fifo_outcome(cfg: &BenchConfig, events: &[TraceEvent]) -> CheckOutcome {
    if cfg.lock != LockKind::FissileFifo {
        return CheckOutcome::skip("fifo-order", "FIFO service disabled for this lock");
    }
    if cfg.fifo_threads == 0 {
        return CheckOutcome::skip("fifo-order", "no FIFO threads configured");
    }
    match check_fifo_order(events) {
        Ok(n) => CheckOutcome::pass("fifo-order", format!("{n} FIFO grants, no overtaking")),
        Err(v) => CheckOutcome::fail("fifo-order", v.what, v.trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(thread: u32, kind: EventKind, value: u64) -> TraceEvent {
        TraceEvent::new(thread, kind).value(value)
    }

    fn stamped(mut v: Vec<TraceEvent>) -> Vec<TraceEvent> {
        for (i, e) in v.iter_mut().enumerate() {
            e.stamp = i as u64 * 10 + 10;
        }
        v
    }

    #[test]
    fn handoff_followed_by_alpha_passes() {
        let t = stamped(vec![
            ev(0, EventKind::FastPathWin, 0),
            ev(1, EventKind::ImpatientSet, 0),
            ev(0, EventKind::Release, 2),
            ev(1, EventKind::HandoffTaken, 2),
            ev(1, EventKind::Release, 0),
        ]);
        let s = check_bounded_bypass(&t).unwrap();
        assert_eq!(s.episodes, 1);
        assert_eq!(s.handoff_releases, 1);
    }

    #[test]
    fn pounce_after_handoff_release_fails() {
        let t = stamped(vec![
            ev(0, EventKind::FastPathWin, 0),
            ev(1, EventKind::ImpatientSet, 0),
            ev(0, EventKind::Release, 2),
            ev(2, EventKind::FastPathWin, 0),
        ]);
        let v = check_bounded_bypass(&t).unwrap_err();
        assert_eq!(v.trace.len(), 2);
    }

    #[test]
    fn one_raced_cycle_allowed_two_not() {
        let ok = stamped(vec![
            ev(0, EventKind::FastPathWin, 0),
            ev(1, EventKind::ImpatientSet, 0),
            ev(0, EventKind::Release, 0),
            ev(2, EventKind::FastPathWin, 0),
            ev(2, EventKind::Release, 2),
            ev(1, EventKind::HandoffTaken, 2),
        ]);
        assert_eq!(check_bounded_bypass(&ok).unwrap().raced_episodes, 1);
        let bad = stamped(vec![
            ev(1, EventKind::ImpatientSet, 0),
            ev(0, EventKind::Release, 0),
            ev(2, EventKind::FastPathWin, 0),
            ev(2, EventKind::Release, 0),
        ]);
        assert!(check_bounded_bypass(&bad).is_err());
    }

    fn enq(thread: u32, id: u64, pre: u64, stamp: u64, fifo: bool) -> TraceEvent {
        let mut e = TraceEvent::new(thread, EventKind::Enqueued)
            .value(id)
            .pre(pre)
            .fifo(fifo);
        e.stamp = stamp;
        e
    }

    fn granted(thread: u32, id: u64, stamp: u64) -> TraceEvent {
        let mut e = TraceEvent::new(thread, EventKind::InnerGranted).value(id);
        e.stamp = stamp;
        e
    }

    #[test]
    fn fifo_in_order_passes() {
        let t = vec![
            enq(0, 1, 0, 1, true),
            enq(1, 2, 2, 3, false),
            granted(0, 1, 4),
            granted(1, 2, 5),
        ];
        assert_eq!(check_fifo_order(&t).unwrap(), 1);
    }

    #[test]
    fn fifo_overtaken_fails() {
        let t = vec![
            enq(0, 1, 0, 1, true),
            enq(1, 2, 2, 3, false),
            granted(1, 2, 4),
            granted(0, 1, 5),
        ];
        let v = check_fifo_order(&t).unwrap_err();
        assert!(v.what.contains("granted first"));
    }

    #[test]
    fn overlapping_swaps_are_not_violations() {
        // Later element's pre stamp precedes the FIFO element's post stamp:
        // the order of the swaps is unknown.
        let t = vec![
            enq(0, 1, 0, 3, true),
            enq(1, 2, 1, 2, false),
            granted(1, 2, 4),
            granted(0, 1, 5),
        ];
        assert!(check_fifo_order(&t).is_ok());
    }
}
