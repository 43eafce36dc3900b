use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gemon_bench::solver;
use gemon_core::dp::{DEFAULT_MAX_ITER, DEFAULT_TOL};

fn value_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("value_iterate");
    for cap in [5u32, 10, 20] {
        let s = solver(cap);
        group.bench_with_input(BenchmarkId::from_parameter(cap), &s, |b, s| {
            b.iter(|| s.value_iterate(black_box(DEFAULT_TOL), DEFAULT_MAX_ITER).unwrap())
        });
    }
    group.finish();
}

fn bellman_sweep(c: &mut Criterion) {
    let s = solver(20);
    let v = s.solve().unwrap();
    c.bench_function("bellman_apply_21x21", |b| b.iter(|| s.bellman_apply(black_box(&v))));
}

criterion_group!(benches, value_iteration, bellman_sweep);
criterion_main!(benches);
