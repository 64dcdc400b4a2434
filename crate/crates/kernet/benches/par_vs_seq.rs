//! Compares the rayon data-parallel hot paths against their sequential
//! reference implementations: kernel matrix construction, random-feature
//! application, and a full bandwidth grid scan.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kernet::kernel::{gaussian_kernel, gaussian_kernel_seq, PairSets};
use kernet::rff::RffMap;
use kernet::sigma::{optimize_sigma_separation, SearchOptions};

fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.gen::<f64>() * 2.0 - 1.0)
}

fn bench_kernel_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("gaussian_kernel");
    for &n in &[128usize, 384] {
        let r = random_matrix(n, 32, 7);
        group.bench_with_input(BenchmarkId::new("parallel", n), &r, |b, r| {
            b.iter(|| gaussian_kernel(r.view(), 0.9).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &r, |b, r| {
            b.iter(|| gaussian_kernel_seq(r.view(), 0.9).unwrap())
        });
    }
    group.finish();
}

fn bench_rff_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("rff_apply");
    let r = random_matrix(256, 16, 3);
    let map = RffMap::sample(16, 0.8, 300, 1).unwrap();
    group.bench_function("parallel", |b| b.iter(|| map.apply(r.view()).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| map.apply_seq(r.view()).unwrap()));
    group.finish();
}

fn bench_sigma_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("sigma_separation_scan");
    group.sample_size(20);
    let n = 96;
    let r = random_matrix(n, 8, 11);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let pairs = PairSets::from_labels(&labels);
    let opts = SearchOptions::default();
    // the grid scan inside runs through the exec layer; with default
    // features this is the rayon path
    group.bench_function("grid_plus_golden", |b| {
        b.iter(|| optimize_sigma_separation(r.view(), &pairs, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_kernel_matrix, bench_rff_apply, bench_sigma_scan);
criterion_main!(benches);
