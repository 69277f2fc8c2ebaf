//! Optional event sink used by the verification suite.
//!
//! Locks hold an `Option<Arc<dyn TraceSink>>`; with no sink attached the
//! only cost is the `is_some` branch at each event site.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Outer word won on the single fast-path attempt.
    FastPathWin,
    /// Fast path failed (or was skipped for FIFO); entering the inner lock.
    Divert,
    /// Queue element linked into the inner lock. `pre` is the stamp taken
    /// immediately before the tail swap.
    Enqueued,
    /// Inner (CNA) lock ownership obtained.
    InnerGranted,
    /// Alpha published impatience.
    ImpatientSet,
    /// Alpha took a direct handoff (observed a value >= 2 in the outer word).
    HandoffTaken,
    /// Alpha won the outer word from the unlocked state.
    OuterWin,
    /// Outer released; `value` is the impatience value that was stored.
    Release,
    /// CNA owner moved its successor onto the secondary chain.
    Culled,
    /// CNA owner spliced the secondary chain back into the primary.
    Flushed,
}

impl EventKind {
    /// Whether this event marks a thread taking ownership of the outer word.
    pub fn is_outer_ownership(self) -> bool {
        matches!(
            self,
            EventKind::FastPathWin | EventKind::HandoffTaken | EventKind::OuterWin
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FastPathWin => "fastpath-win",
            EventKind::Divert => "divert",
            EventKind::Enqueued => "enqueued",
            EventKind::InnerGranted => "inner-granted",
            EventKind::ImpatientSet => "impatient-set",
            EventKind::HandoffTaken => "handoff-taken",
            EventKind::OuterWin => "outer-win",
            EventKind::Release => "release",
            EventKind::Culled => "culled",
            EventKind::Flushed => "flushed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    /// Logical timestamp, unique and totally ordered within one sink.
    pub stamp: u64,
    pub thread: u32,
    pub kind: EventKind,
    /// Element id for queue events, stored value for `Release`.
    pub value: u64,
    /// Auxiliary stamp (`Enqueued`: stamp taken before the swap).
    pub pre: u64,
    pub fifo: bool,
    /// `Culled` only: the culled element was the lock's tail.
    pub was_tail: bool,
}

impl TraceEvent {
    pub fn new(thread: u32, kind: EventKind) -> Self {
        Self {
            stamp: 0,
            thread,
            kind,
            value: 0,
            pre: 0,
            fifo: false,
            was_tail: false,
        }
    }

    pub fn value(mut self, v: u64) -> Self {
        self.value = v;
        self
    }

    pub fn pre(mut self, p: u64) -> Self {
        self.pre = p;
        self
    }

    pub fn fifo(mut self, f: bool) -> Self {
        self.fifo = f;
        self
    }

    pub fn was_tail(mut self, t: bool) -> Self {
        self.was_tail = t;
        self
    }
}

pub trait TraceSink: Send + Sync {
    /// Draws the next logical timestamp.
    fn stamp(&self) -> u64;

    /// Records an event, assigning it a fresh timestamp.
    fn record(&self, event: TraceEvent);
}

/// In-memory sink. Timestamps come from one atomic counter, so the stamp
/// order is a linearization of the instrumented steps.
#[derive(Debug, Default)]
pub struct TraceLog {
    clock: AtomicU64,
    events: Mutex<Vec<TraceEvent>>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// All events so far, sorted by stamp.
    pub fn events(&self) -> Vec<TraceEvent> {
        let mut v = self
            .events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone();
        v.sort_unstable_by_key(|e| e.stamp);
        v
    }

    pub fn clear(&self) {
        self.events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clear();
    }
}

impl TraceSink for TraceLog {
    fn stamp(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst)
    }

    fn record(&self, mut event: TraceEvent) {
        event.stamp = self.stamp();
        self.events
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(event);
    }
}
