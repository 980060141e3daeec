//! Sequential versus parallel state-vector kernels across state sizes.
//!
//! Run with `cargo bench -p qdvsim`. The parallel path needs the default
//! `parallel` feature; without it only the sequential side runs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qdvsim::quantum::kernel;

fn random_amps(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn bench_expectation(c: &mut Criterion) {
    let mut group = c.benchmark_group("masked_norm_sqr");
    for bits in [12u32, 16, 20] {
        let amps = random_amps(1 << bits, 1);
        group.throughput(Throughput::Elements(1 << bits));
        group.bench_with_input(BenchmarkId::new("seq", bits), &amps, |b, amps| {
            b.iter(|| kernel::seq::masked_norm_sqr(black_box(amps), bits - 1, 1))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", bits), &amps, |b, amps| {
            b.iter(|| kernel::par::masked_norm_sqr(black_box(amps), bits - 1, 1))
        });
    }
    group.finish();
}

fn bench_project(c: &mut Criterion) {
    let mut group = c.benchmark_group("project");
    for bits in [12u32, 16, 20] {
        let amps = random_amps(1 << bits, 2);
        group.throughput(Throughput::Elements(1 << bits));
        group.bench_with_input(BenchmarkId::new("seq", bits), &amps, |b, amps| {
            b.iter(|| kernel::seq::project(black_box(amps), 3, 0))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", bits), &amps, |b, amps| {
            b.iter(|| kernel::par::project(black_box(amps), 3, 0))
        });
    }
    group.finish();
}

fn bench_tensor(c: &mut Criterion) {
    let mut group = c.benchmark_group("tensor");
    for bits in [8u32, 10] {
        let a = random_amps(1 << bits, 3);
        let b_amps = random_amps(1 << bits, 4);
        group.throughput(Throughput::Elements(1 << (2 * bits)));
        group.bench_with_input(
            BenchmarkId::new("seq", 2 * bits),
            &(a, b_amps),
            |b, input| b.iter(|| kernel::seq::tensor(black_box(&input.0), black_box(&input.1))),
        );
        #[cfg(feature = "parallel")]
        {
            let a = random_amps(1 << bits, 3);
            let b_amps = random_amps(1 << bits, 4);
            group.bench_with_input(
                BenchmarkId::new("par", 2 * bits),
                &(a, b_amps),
                |b, input| b.iter(|| kernel::par::tensor(black_box(&input.0), black_box(&input.1))),
            );
        }
    }
    group.finish();
}

criterion_group!(kernels, bench_expectation, bench_project, bench_tensor);
criterion_main!(kernels);
