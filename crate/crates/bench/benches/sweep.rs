//! One full Gibbs sweep at the reference scale (n = 100, p = 1000,
//! q = 10) plus its two building blocks that dominate the cost.

use adass_bench::{bench_setup, BENCH_N, BENCH_P, BENCH_Q};
use adass_core::sampler::{self, SweepStats};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_full_sweep(c: &mut Criterion) {
    let (data, cfg, mut state, mut rng) = bench_setup(11);
    c.bench_function(
        &format!("sweep n={BENCH_N} p={BENCH_P} q={BENCH_Q}"),
        |b| {
            b.iter(|| {
                sampler::sweep(black_box(&mut state), data.view(), &cfg, &mut rng)
                    .expect("sweep succeeds");
            })
        },
    );
}

fn bench_loading_update(c: &mut Criterion) {
    let (data, cfg, mut state, mut rng) = bench_setup(13);
    c.bench_function("loading update alone", |b| {
        b.iter(|| {
            let stats = SweepStats::compute(&state.factors, data.view());
            sampler::update_beta(black_box(&mut state), &stats, &cfg, &mut rng)
                .expect("update succeeds");
        })
    });
}

fn bench_factor_update(c: &mut Criterion) {
    let (data, cfg, mut state, mut rng) = bench_setup(17);
    c.bench_function("factor update alone", |b| {
        b.iter(|| {
            sampler::update_z(black_box(&mut state), data.view(), &cfg, &mut rng)
                .expect("update succeeds");
        })
    });
}

criterion_group!(benches, bench_full_sweep, bench_loading_update, bench_factor_update);
criterion_main!(benches);
