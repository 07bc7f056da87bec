use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use splitprop::baselines::{chebyshev_expm, lanczos_expm};
use splitprop::compose_k;
use splitprop::methods::builtin;
use splitprop::propagate::step;
use splitprop_bench::{poschl_teller_fixture, tridiag_fixture};

fn h_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("h_apply");
    for n in [1000, 10_000] {
        let (op, u) = tridiag_fixture(0.5, n, 1);
        let x: Vec<f64> = u.iter().map(|z| z.re).collect();
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("tridiagonal", n), &n, |b, _| {
            b.iter(|| op.apply(black_box(&x), &mut out))
        });
    }
    for n in [128, 1024] {
        let (op, u) = poschl_teller_fixture(n, 1);
        let x: Vec<f64> = u.iter().map(|z| z.re).collect();
        let mut out = vec![0.0; n];
        group.bench_with_input(BenchmarkId::new("fourier", n), &n, |b, _| b.iter(|| op.apply(black_box(&x), &mut out)));
    }
    group.finish();
}

fn splitting_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    let (op, u) = tridiag_fixture(0.5, 1000, 2);
    for name in ["leapfrog", "strang", "leapfrog_concat(8)"] {
        let method = builtin(name).unwrap();
        let tau = method.m as f64 * method.theta_prime / op.rho_bound();
        let mut q: Vec<f64> = u.iter().map(|z| z.re).collect();
        let mut p: Vec<f64> = u.iter().map(|z| z.im).collect();
        group.bench_function(name, |b| b.iter(|| step(&method, &op, tau, &mut q, &mut p).unwrap()));
    }
    group.finish();
}

fn compose(c: &mut Criterion) {
    let mut group = c.benchmark_group("compose_k");
    for m in [4, 16, 40] {
        let method = builtin(&format!("leapfrog_concat({m})")).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| compose_k(black_box(&method)).unwrap())
        });
    }
    group.finish();
}

fn baselines(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    let (op, u) = tridiag_fixture(0.5, 1000, 3);
    for m in [16, 64] {
        group.bench_with_input(BenchmarkId::new("chebyshev", m), &m, |b, &m| {
            b.iter(|| chebyshev_expm(&op, &u, 10.0, m).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("lanczos", m), &m, |b, &m| {
            b.iter(|| lanczos_expm(&op, &u, 10.0, m).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, h_apply, splitting_step, compose, baselines);
criterion_main!(benches);
