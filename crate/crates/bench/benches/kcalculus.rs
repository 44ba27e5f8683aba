use std::hint::black_box;

use conelab::combinat::{k_transform, star_convolution, ConfigurationFunction};
use conelab::{FiniteConfiguration, FunctionSpec, MarkAnnulus, MarkedPoint, PositionWindow};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn configuration(n: usize) -> FiniteConfiguration {
    let points = (0..n)
        .map(|i| {
            let t = i as f64;
            MarkedPoint::new(vec![0.5 + (t * 0.37).fract() * 1.5], vec![t + 0.25]).unwrap()
        })
        .collect();
    FiniteConfiguration::new(points).unwrap()
}

fn general() -> ConfigurationFunction {
    ConfigurationFunction::new(|g| {
        g.iter().map(|p| p.velocity()[0] * p.position()[0]).sum::<f64>().cos()
    })
}

fn transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("k_transform");
    let window = PositionWindow::new(vec![0.0], vec![20.0]).unwrap();
    let coherent = ConfigurationFunction::coherent(
        FunctionSpec::indicator(MarkAnnulus::new(0.5, 2.0).unwrap(), window).scale(0.2),
    );
    let g = general();
    for n in [12, 16] {
        let gamma = configuration(n);
        group.bench_with_input(BenchmarkId::new("general", n), &gamma, |b, gamma| {
            b.iter(|| k_transform(&g, black_box(gamma)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("product", n), &gamma, |b, gamma| {
            b.iter(|| k_transform(&coherent, black_box(gamma)).unwrap())
        });
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let g1 = general();
    let g2 = ConfigurationFunction::new(|g| 1.0 / (1.0 + g.len() as f64));
    let mut group = c.benchmark_group("star_convolution");
    for n in [8, 12] {
        let gamma = configuration(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &gamma, |b, gamma| {
            b.iter(|| star_convolution(&g1, &g2, black_box(gamma)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, transform, convolution);
criterion_main!(benches);
