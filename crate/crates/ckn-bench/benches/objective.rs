//! Training-side benchmarks: the objective/gradient evaluation that
//! dominates layer training, and k-means initialization.

use ckn_bench::unit_rows;
use ckn_core::training::{kmeans_init, objective_and_gradient, PatchPairs, TrainingPairs};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array1;
use std::hint::black_box;

fn bench_objective(c: &mut Criterion) {
    let mut group = c.benchmark_group("objective_and_gradient");
    group.sample_size(10);
    for &(n, m, p) in &[(10_000usize, 108usize, 50usize), (20_000, 144, 64)] {
        let x = unit_rows(n, m, 1);
        let y = unit_rows(n, m, 2);
        let pairs = TrainingPairs::new(x, y, 0.6).unwrap();
        let w = unit_rows(p, m, 3);
        let eta = Array1::from_elem(p, 1.0 / p as f64);
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("n{n}_m{m}_p{p}")),
            &pairs,
            |b, pairs| {
                b.iter(|| {
                    black_box(objective_and_gradient(&w, &eta, pairs, 0.6).unwrap());
                })
            },
        );
    }
    group.finish();
}

fn bench_kmeans(c: &mut Criterion) {
    let x = unit_rows(5_000, 108, 5);
    let y = unit_rows(5_000, 108, 6);
    let pairs = PatchPairs::from_rows(x, y).unwrap();
    c.bench_function("kmeans_init_10k_points_k50", |b| {
        b.iter(|| black_box(kmeans_init(&pairs, 50, 5, 1).unwrap()))
    });
}

criterion_group!(benches, bench_objective, bench_kmeans);
criterion_main!(benches);
