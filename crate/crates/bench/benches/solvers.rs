use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use quantot_bench::{cloud, peaked_cloud, uniform_weights};
use quantot_core::sinkhorn::approx_solve;
use quantot_core::{solve_exact, squared_euclidean_cost};

fn bench_exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_exact");
    group.sample_size(10);
    for &n in &[64usize, 128, 256] {
        let x = cloud(n, 5, 1);
        let y = cloud(n, 5, 2);
        let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
        let a = uniform_weights(n);
        group.bench_with_input(BenchmarkId::new("uniform", n), &n, |b, _| {
            b.iter(|| solve_exact(a.view(), a.view(), &cost).unwrap().cost)
        });
    }
    let n = 256usize;
    let x = peaked_cloud(n, 5, 0.0, 3);
    let y = peaked_cloud(n, 5, 1.0, 4);
    let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
    let a = uniform_weights(n);
    group.bench_with_input(BenchmarkId::new("peaked", n), &n, |b, _| {
        b.iter(|| solve_exact(a.view(), a.view(), &cost).unwrap().cost)
    });
    group.finish();
}

fn bench_sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("approx_solve");
    group.sample_size(10);
    let n = 100;
    let x = cloud(n, 3, 5);
    let y = cloud(n, 3, 6);
    let cost = squared_euclidean_cost(x.view(), y.view()).unwrap();
    let a = uniform_weights(n);
    for &frac in &[0.1f64, 0.05] {
        let eps = frac * cost.max_entry();
        group.bench_with_input(
            BenchmarkId::new("eps_fraction", format!("{frac}")),
            &eps,
            |b, &eps| b.iter(|| approx_solve(a.view(), a.view(), &cost, eps).unwrap().cost),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_exact, bench_sinkhorn);
criterion_main!(benches);
