use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use std::hint::black_box;

use shiftnorm::bounds::{compute_bounds, mc_expected_w2};
use shiftnorm::metrics::{w2_normalized, w2_squared};
use shiftnorm::special::chi2_quantile;
use shiftnorm::{estimate_stats, BoundInput, CounterRng, EvalMode, Network};

fn batch(seed: u64, n: usize, d: usize) -> Array2<f64> {
    let mut rng = CounterRng::new(seed);
    Array2::from_shape_fn((n, d), |(_, j)| rng.normal(j as f64, 1.0 + j as f64))
}

fn stats(c: &mut Criterion) {
    let mut g = c.benchmark_group("estimate_stats");
    for n in [32, 512, 4096] {
        let x = batch(1, n, 32);
        g.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| estimate_stats(black_box(x.view())).unwrap())
        });
    }
    g.finish();
}

fn metrics(c: &mut Criterion) {
    let s = estimate_stats(batch(2, 256, 64).view()).unwrap();
    let t = estimate_stats(batch(3, 256, 64).view()).unwrap();
    c.bench_function("w2_squared/64", |b| {
        b.iter(|| w2_squared(black_box(&s), black_box(&t)).unwrap())
    });
    c.bench_function("w2_normalized/64", |b| {
        b.iter(|| w2_normalized(black_box(&s), black_box(&t)).unwrap())
    });
}

fn network(c: &mut Criterion) {
    let net = Network::mlp(2, &[32, 32], 3, 0).unwrap();
    let x = batch(4, 1536, 2);
    c.bench_function("forward/train_stats/1536", |b| {
        b.iter(|| {
            net.forward(black_box(x.view()), &EvalMode::TrainStats)
                .unwrap()
        })
    });
    let mode = net.adapt_full(x.view(), 0.0, None).unwrap();
    c.bench_function("forward/adapted/1536", |b| {
        b.iter(|| net.forward(black_box(x.view()), &mode).unwrap())
    });
}

fn bounds(c: &mut Criterion) {
    let inp = BoundInput {
        mu_s: 0.0,
        var_s: 1.0,
        mu_t: 1.0,
        var_t: 1.5,
        n: 32,
        pseudo_n: 64.0,
        alpha: 0.05,
    };
    c.bench_function("compute_bounds", |b| {
        b.iter(|| compute_bounds(black_box(&inp)).unwrap())
    });
    c.bench_function("chi2_quantile/df31", |b| {
        b.iter(|| chi2_quantile(black_box(0.025), black_box(31)).unwrap())
    });
    let mut g = c.benchmark_group("mc_expected_w2");
    g.sample_size(10);
    g.bench_function("10000", |b| {
        b.iter(|| mc_expected_w2(black_box(&inp), 10_000, 7).unwrap())
    });
    g.finish();
}

criterion_group!(kernels, stats, metrics, network, bounds);
criterion_main!(kernels);
