use std::hint::black_box;

use basket_wing::copula::{chi_numeric, default_ladder, gumbel_copula};
use basket_wing::oracle::mc::{mc_basket, mc_timechanged, Payoff, Tilt};
use basket_wing::oracle::quad_put_2d;
use basket_wing::BasketSpec;
use basket_wing_bench::{equal_weights, gamma_basket, random_cov, reference_basket};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_quad(c: &mut Criterion) {
    let basket = reference_basket();
    let mut group = c.benchmark_group("quad_put_2d");
    for nodes in [100, 200, 400] {
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &nodes, |b, &nodes| {
            b.iter(|| quad_put_2d(black_box(&basket), (-10.0f64).exp(), nodes).unwrap())
        });
    }
    group.finish();
}

fn bench_mc(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc");
    group.sample_size(10);
    let basket = BasketSpec::new(equal_weights(4), random_cov(4, 7), 1.0).unwrap();
    group.bench_function("basket_put_tilted/4_assets/65536", |b| {
        b.iter(|| mc_basket(black_box(&basket), Payoff::Put(0.2), Tilt::Auto, 1 << 16, 1).unwrap())
    });
    let tc = gamma_basket();
    group.bench_function("timechanged_put_tilted/65536", |b| {
        b.iter(|| mc_timechanged(black_box(&tc), Payoff::Put(0.05), Tilt::Auto, 1 << 16, 1).unwrap())
    });
    group.finish();
}

fn bench_chi(c: &mut Criterion) {
    let gumbel = gumbel_copula(2.0).unwrap();
    let ladder = default_ladder();
    c.bench_function("chi_numeric/gumbel", |b| {
        b.iter(|| chi_numeric(gumbel.as_ref(), black_box(&[1.0, 1.5]), &ladder).unwrap())
    });
}

criterion_group!(benches, bench_quad, bench_mc, bench_chi);
criterion_main!(benches);
