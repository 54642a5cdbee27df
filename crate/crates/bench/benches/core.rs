use std::hint::black_box;

use bibt_core::sampler::default_labels;
use bibt_core::{
    pg_draw, rng_from_seed, run_chain, ComparisonData, Hyperparams, OperatorSet, PgParams,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn polya_gamma(c: &mut Criterion) {
    let mut group = c.benchmark_group("pg_draw");
    for (b, tilt) in [(1, 0.0), (1, 4.0), (100, 1.0)] {
        let params = PgParams::new(b, tilt).unwrap();
        let mut rng = rng_from_seed(1);
        group.bench_with_input(BenchmarkId::new(format!("b{b}"), tilt), &params, |bench, &p| {
            bench.iter(|| pg_draw(black_box(p), &mut rng))
        });
    }
    group.finish();
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_set");
    for n in [10, 30] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, &n| {
            bench.iter(|| OperatorSet::new(black_box(n)).unwrap())
        });
    }
    group.finish();
}

fn chain(c: &mut Criterion) {
    let n = 10;
    let ops = OperatorSet::new(n).unwrap();
    let e = ops.n_edges();
    let wins = (0..e as u32).map(|k| 20 + (k * 7) % 60).collect();
    let data = ComparisonData::new(default_labels(n), wins, vec![100; e]).unwrap();
    let hp = Hyperparams { n_iterations: 200, burn_in: 100, ..Hyperparams::default() };
    let mut group = c.benchmark_group("chain");
    group.sample_size(10);
    group.bench_function("bibt_n10_200_iters", |bench| {
        bench.iter(|| run_chain(black_box(&data), &hp, &ops).unwrap())
    });
    group.finish();
}

criterion_group!(benches, polya_gamma, operators, chain);
criterion_main!(benches);
