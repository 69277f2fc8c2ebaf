//! Hashed lock array guarding a multi-word "atomic" record, the way
//! language runtimes implement atomics on types too wide for hardware
//! support.

use std::cell::UnsafeCell;
use std::hint::black_box;
use std::ptr;

use crate::harness::{drive, BenchConfig, BenchError, BenchReport, Workload};
use crate::lock::{with_lock, LockKind, LockParams, RawLock, ThreadContext};

/// Fixed-size array of locks indexed by a hash of the guarded address.
pub struct LockTable {
    locks: Vec<Box<dyn RawLock>>,
}

impl LockTable {
    pub fn new(kind: LockKind, size: u32, params: &LockParams) -> Self {
        assert!(size > 0, "lock table needs at least one lock");
        Self {
            locks: (0..size).map(|_| kind.build(params)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.locks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locks.is_empty()
    }

    pub fn index_for(&self, addr: usize) -> usize {
        let mut h = (addr >> 4) as u64;
        h ^= h >> 17;
        h = h.wrapping_mul(0xed5a_d4bb);
        h ^= h >> 11;
        (h % self.locks.len() as u64) as usize
    }

    pub fn lock_for(&self, addr: usize) -> &dyn RawLock {
        &*self.locks[self.index_for(addr)]
    }
}

/// Five 32-bit words read and written as a unit under their guard lock.
#[derive(Debug, Default)]
pub struct AtomicRecord {
    fields: UnsafeCell<[u32; 5]>,
}

// SAFETY: the fields are only accessed under the record's guard lock.
unsafe impl Sync for AtomicRecord {}

impl AtomicRecord {
    pub fn new(v: [u32; 5]) -> Self {
        Self {
            fields: UnsafeCell::new(v),
        }
    }

    fn addr(&self) -> usize {
        self.fields.get() as usize
    }

    pub fn guard<'t>(&self, table: &'t LockTable) -> &'t dyn RawLock {
        table.lock_for(self.addr())
    }

    pub fn load(&self, table: &LockTable, ctx: &mut ThreadContext) -> [u32; 5] {
        // SAFETY: read under the guard.
        with_lock(self.guard(table), ctx, || unsafe {
            ptr::read_volatile(self.fields.get())
        })
    }

    pub fn store(&self, table: &LockTable, ctx: &mut ThreadContext, v: [u32; 5]) {
        // SAFETY: written under the guard.
        with_lock(self.guard(table), ctx, || unsafe {
            ptr::write_volatile(self.fields.get(), v)
        })
    }

    /// Reads the fields. The caller must hold [`AtomicRecord::guard`].
    unsafe fn load_held(&self) -> [u32; 5] {
        ptr::read_volatile(self.fields.get())
    }
}

struct AtomicLoad {
    table: LockTable,
    record: AtomicRecord,
}

impl Workload for AtomicLoad {
    fn lock(&self) -> &dyn RawLock {
        self.record.guard(&self.table)
    }

    #[inline]
    fn critical(&self) {
        // SAFETY: the harness calls this holding `self.lock()`.
        black_box(unsafe { self.record.load_held() });
    }
}

/// Every iteration performs a guarded load of a shared five-word record;
/// the guard is picked from a hashed lock array.
pub fn run_atomic_workload(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let topology = cfg.topology_map()?;
    let mut runs = Vec::with_capacity(cfg.runs as usize);
    for run in 0..cfg.runs {
        let work = AtomicLoad {
            table: LockTable::new(cfg.lock, cfg.lock_array, &cfg.lock_params()),
            record: AtomicRecord::new([0; 5]),
        };
        let mut m = drive(cfg, run, &topology, &work, false)?;
        m.warnings.extend(topology.warnings().iter().cloned());
        runs.push(m);
    }
    Ok(BenchReport::new(cfg.clone(), runs))
}
