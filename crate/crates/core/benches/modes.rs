use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::f64::consts::PI;

use viscoctl::grid::{Extrapolation, TimeGrid};
use viscoctl::kernel::{normalize, KernelSpec};
use viscoctl::moment::telegraph_family;
use viscoctl::par;
use viscoctl::riesz::gram;
use viscoctl::spectral::{compute_eigenpairs, DomainSpec, Face};
use viscoctl::volterra::VolterraSolver;

fn bench_modes(c: &mut Criterion) {
    let grid = TimeGrid::new(PI, 2e-3).unwrap();
    let kernel = normalize(&KernelSpec::exponential(1.0, 1.0, 0.0), &grid).unwrap();
    let spectrum = compute_eigenpairs(
        &DomainSpec::interval(PI, vec![Face::Right]),
        16,
        kernel.alpha,
    )
    .unwrap();
    let solver = VolterraSolver::new(&kernel, Extrapolation::default()).unwrap();
    let family = telegraph_family(&spectrum, TimeGrid::new(2.5 * PI, 1e-3).unwrap(), 0.0).unwrap();

    let mut group = c.benchmark_group("modes");
    group.sample_size(10);
    for (label, sequential) in [("parallel", false), ("sequential", true)] {
        par::set_sequential(sequential);
        group.bench_with_input(BenchmarkId::new("responses", label), &spectrum, |b, s| {
            b.iter(|| solver.responses(&s.pairs).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gram", label), &family, |b, f| {
            b.iter(|| gram(f, 16).unwrap())
        });
    }
    par::set_sequential(false);
    group.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
