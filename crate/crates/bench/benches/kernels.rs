use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use caloric_bench::frequency::functionals;
use caloric_bench::graph::{half_derivative_fourier, half_derivative_singular};
use caloric_bench::neck::{greedy_neck_decomposition, DecompositionParams};
use caloric_bench::strata::{minkowski_content, zero_set, GridSpec};
use caloric_bench::{heat_polynomial, CaloricFunction, ParabolicBall, SpaceTimePoint};

fn exact_algebra(c: &mut Criterion) {
    let mut g = c.benchmark_group("caloricpoly");
    for m in [4u32, 8, 10] {
        g.bench_with_input(BenchmarkId::new("heat_residual_n3", m), &m, |b, &m| {
            b.iter(|| caloric_bench::caloricpoly::heat_residual(black_box(&heat_polynomial(3, m, 2))))
        });
    }
    g.finish();
}

fn frequency(c: &mut Criterion) {
    let u = CaloricFunction::new(heat_polynomial(2, 6, 0).add(&heat_polynomial(2, 3, 1)));
    let base = SpaceTimePoint::origin(2);
    let mut g = c.benchmark_group("frequency");
    g.bench_function("functionals_quadrature", |b| b.iter(|| functionals(&u, black_box(&base), 0.7).unwrap()));
    g.bench_function("frequency_fast", |b| b.iter(|| u.frequency_fast(black_box(&base), 0.7)));
    g.finish();
}

fn strata(c: &mut Criterion) {
    let u = CaloricFunction::new(heat_polynomial(2, 1, 0).mul(&heat_polynomial(2, 1, 1)));
    let ball = ParabolicBall::new(SpaceTimePoint::origin(2), 1.0).unwrap();
    let grid = GridSpec::new(ParabolicBall::new(SpaceTimePoint::origin(2), 1.125).unwrap(), 1.0 / 64.0).unwrap();
    let mut g = c.benchmark_group("strata");
    g.sample_size(10);
    g.bench_function("singular_zero_set_xy", |b| b.iter(|| zero_set(&u, black_box(&grid), true).unwrap()));
    let s = zero_set(&u, &grid, true).unwrap();
    g.bench_function("minkowski_content_xy", |b| b.iter(|| minkowski_content(black_box(&s), 0.125, &ball).unwrap()));
    g.finish();
}

fn neck(c: &mut Criterion) {
    let u = CaloricFunction::new(heat_polynomial(1, 1, 0));
    let ball = ParabolicBall::new(SpaceTimePoint::origin(1), 1.0).unwrap();
    let params = DecompositionParams::new(2, 0.05, 0.05, 1.0 / 16.0);
    let mut g = c.benchmark_group("neck");
    g.sample_size(10);
    g.bench_function("h1_decomposition", |b| b.iter(|| greedy_neck_decomposition(&u, black_box(&ball), &params).unwrap()));
    g.finish();
}

fn half_derivative(c: &mut Criterion) {
    let n = 1024;
    let dt = 1.0 / n as f64;
    let phi: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * 5.0 * i as f64 * dt).sin()).collect();
    let mut g = c.benchmark_group("half_derivative");
    g.bench_function("fourier_1024", |b| b.iter(|| half_derivative_fourier(black_box(&phi), dt).unwrap()));
    g.sample_size(10);
    g.bench_function("singular_1024", |b| b.iter(|| half_derivative_singular(black_box(&phi), dt).unwrap()));
    g.finish();
}

criterion_group!(benches, exact_algebra, frequency, strata, neck, half_derivative);
criterion_main!(benches);
