use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use contagion_core::meanfield::{classify_fixed_points, equilibrium, hysteresis_sweep, phase_diagram};
use contagion_core::{LocationScaleDistribution, MeanFieldParams};

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn classify(c: &mut Criterion) {
    let mut group = c.benchmark_group("classify_fixed_points");
    let t2 = LocationScaleDistribution::student_t(2.0).unwrap();
    for (name, dist) in [("normal", LocationScaleDistribution::Normal), ("t2", t2)] {
        let params = MeanFieldParams::new(3.0, 7.0, dist).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &params, |bch, p| {
            bch.iter(|| classify_fixed_points(black_box(p)))
        });
    }
    group.finish();
}

fn iterate(c: &mut Criterion) {
    let params = MeanFieldParams::new(3.0, 7.0, LocationScaleDistribution::Normal).unwrap();
    c.bench_function("equilibrium_bistable", |bch| {
        bch.iter(|| equilibrium(black_box(&params), black_box(1.0)).unwrap())
    });
    let a = linspace(0.0, 7.0, 401);
    c.bench_function("hysteresis_sweep_401", |bch| {
        bch.iter(|| hysteresis_sweep(black_box(7.0), &a, &LocationScaleDistribution::Normal).unwrap())
    });
}

fn phase(c: &mut Criterion) {
    let a = linspace(-3.0, 17.0, 50);
    let b = linspace(0.0, 15.0, 50);
    c.bench_function("phase_diagram_50x50", |bch| {
        bch.iter(|| phase_diagram(&a, &b, 1.0, &LocationScaleDistribution::Normal).unwrap())
    });
}

criterion_group!(benches, classify, iterate, phase);
criterion_main!(benches);
