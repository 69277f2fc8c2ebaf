use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fissile_bench::{build, contended, uncontended};
use fissile_core::{LockKind, ThreadContext};

fn bench_uncontended(c: &mut Criterion) {
    let mut g = c.benchmark_group("uncontended");
    g.throughput(Throughput::Elements(1));
    for kind in LockKind::ALL {
        let lock = build(kind);
        let mut ctx = ThreadContext::simple(0);
        g.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| uncontended(black_box(&*lock), &mut ctx, 1))
        });
    }
    g.finish();
}

fn bench_contended(c: &mut Criterion) {
    let mut g = c.benchmark_group("contended");
    g.sample_size(10);
    const PER_THREAD: u64 = 2_000;
    for threads in [2u32, 4] {
        g.throughput(Throughput::Elements(u64::from(threads) * PER_THREAD));
        for kind in LockKind::ALL {
            g.bench_with_input(
                BenchmarkId::new(kind.as_str(), threads),
                &threads,
                |b, &n| {
                    b.iter(|| {
                        let lock = build(kind);
                        contended(&*lock, n, PER_THREAD)
                    })
                },
            );
        }
    }
    g.finish();
}

criterion_group!(benches, bench_uncontended, bench_contended);
criterion_main!(benches);
