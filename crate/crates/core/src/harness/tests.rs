use std::time::Duration;

use super::*;
use crate::lock::LockKind;

fn short(lock: LockKind, threads: u32) -> BenchConfig {
    BenchConfig {
        lock,
        threads,
        duration: Duration::from_millis(50),
        runs: 1,
        topology: TopologyChoice::Synthetic(1),
        ..BenchConfig::default()
    }
}

#[test]
fn single_thread_never_waits() {
    for kind in LockKind::ALL {
        let rep = run_mutexbench(&short(kind, 1)).unwrap();
        let m = &rep.median;
        assert!(m.acquisitions > 0, "{kind}");
        assert_eq!(m.spread, 1.0);
        assert_eq!(m.rstddev, 0.0);
        assert_eq!(m.migration, f64::INFINITY);
        assert!(
            !m.warnings.iter().any(|w| w.contains("conservation")),
            "{kind}"
        );
    }
}

#[test]
fn clock_and_samples_are_conserved() {
    for mode in [LogMode::Global, LogMode::PerThread] {
        let cfg = BenchConfig {
            log_mode: mode,
            ..short(LockKind::Fissile, 3)
        };
        let rep = run_mutexbench_with(&cfg, true).unwrap();
        let m = &rep.runs[0];
        assert_eq!(m.samples.len() as u64, m.acquisitions);
        assert_eq!(m.per_thread.iter().sum::<u64>(), m.acquisitions);
        assert!(!m.warnings.iter().any(|w| w.contains("conservation")));
    }
}

#[test]
fn fifo_threads_counted_separately() {
    let cfg = BenchConfig {
        fifo_threads: 1,
        ..short(LockKind::FissileFifo, 2)
    };
    let rep = run_mutexbench_with(&cfg, true).unwrap();
    let m = &rep.runs[0];
    assert_eq!(m.per_thread.len(), 3);
    let fifo_samples = m.samples.iter().filter(|s| s.fifo).count() as u64;
    assert_eq!(fifo_samples, m.per_thread[2]);
    assert_eq!(m.fifo_waits.count, fifo_samples);
    let total = m.normal_throughput + m.fifo_throughput;
    assert!((total - m.throughput).abs() <= 1e-6 * m.throughput.max(1.0));
}

#[test]
fn median_over_runs() {
    let cfg = BenchConfig {
        runs: 3,
        ..short(LockKind::Tts, 1)
    };
    let rep = run_mutexbench(&cfg).unwrap();
    assert_eq!(rep.runs.len(), 3);
    assert_eq!(rep.csv_rows().len(), 4);
}

#[test]
fn invalid_config_rejected_before_running() {
    let cfg = BenchConfig {
        runs: 2,
        ..short(LockKind::Mcs, 1)
    };
    assert!(matches!(
        run_mutexbench(&cfg),
        Err(BenchError::Config(ConfigError::EvenRuns(2)))
    ));
}

#[test]
fn seeds_differ_per_thread_and_run() {
    assert_ne!(thread_seed(1, 0, 0), thread_seed(1, 0, 1));
    assert_ne!(thread_seed(1, 0, 0), thread_seed(1, 1, 0));
    assert_eq!(thread_seed(7, 2, 3), thread_seed(7, 2, 3));
}
