use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qsdlab_core::kernel::{defect_kernel, first_passage_survival};
use qsdlab_core::simulate::simulate_conditioned;
use qsdlab_core::{Conditioning, InitialMeasure, Kernel, SimConfig};

fn pointwise(c: &mut Criterion) {
    c.bench_function("defect_kernel", |b| {
        b.iter(|| defect_kernel(black_box(2.0), black_box(1.0), black_box(0.7), 1.0))
    });
    c.bench_function("first_passage_survival", |b| {
        b.iter(|| first_passage_survival(black_box(1.0), black_box(5.0), 1.0))
    });
}

fn survival(c: &mut Criterion) {
    let kernel = Kernel::new(1.0).unwrap();
    let mut g = c.benchmark_group("survival");
    for mu in [
        InitialMeasure::exponential(0.5).unwrap(),
        InitialMeasure::pareto(1.0, 1.0).unwrap(),
        InitialMeasure::weibull(1.0, 0.3).unwrap(),
    ] {
        g.bench_with_input(BenchmarkId::from_parameter(mu.family()), &mu, |b, mu| {
            b.iter(|| kernel.survival(mu, black_box(50.0)).unwrap())
        });
    }
    g.finish();
}

fn conditional_law(c: &mut Criterion) {
    let kernel = Kernel::new(1.0).unwrap();
    let mu = InitialMeasure::exponential(0.5).unwrap();
    let mut g = c.benchmark_group("conditional_law");
    g.sample_size(10);
    for t in [5.0, 60.0] {
        g.bench_with_input(BenchmarkId::from_parameter(t), &t, |b, &t| {
            b.iter(|| kernel.conditional_law(&mu, t).unwrap())
        });
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let mu = InitialMeasure::dirac(1.0).unwrap();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for conditioning in [Conditioning::Rejection, Conditioning::Resampling] {
        let cfg = SimConfig::new(1.0, 20_000, conditioning).with_dt(0.01);
        g.bench_function(format!("{conditioning:?}"), |b| {
            b.iter(|| simulate_conditioned(&mu, 1.0, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pointwise, survival, conditional_law, simulate);
criterion_main!(benches);
