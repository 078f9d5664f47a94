use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use strata_bench::{background, circle_measurement, full_background, three_layer};
use strata_core::bem::{assemble, cgpt, np_spectrum, solve_densities};
use strata_core::contrasts_of;
use strata_core::disks::{cert_matrices, multipole_spectrum};
use strata_core::inverse::{invert, InverseOptions};

fn analytic(c: &mut Criterion) {
    let d = three_layer();
    let orders: Vec<usize> = (1..=20).collect();
    c.bench_function("multipole_spectrum/20", |b| b.iter(|| multipole_spectrum(black_box(&d), &orders).unwrap()));
    let lambdas = contrasts_of(&d).unwrap().lambdas;
    c.bench_function("cert_matrices/3", |b| {
        b.iter(|| cert_matrices(black_box(&lambdas), &d.radii, &[1, 2, 3]).unwrap())
    });
}

fn boundary_integral(c: &mut Criterion) {
    let d = three_layer();
    let h = background();
    let mut group = c.benchmark_group("bem");
    group.sample_size(10);
    for nodes in [64, 128, 256] {
        let shape = d.to_shape(nodes);
        group.bench_with_input(BenchmarkId::new("assemble", nodes), &nodes, |b, &n| {
            b.iter(|| assemble(black_box(&shape), n).unwrap())
        });
        let system = assemble(&shape, nodes).unwrap();
        group.bench_with_input(BenchmarkId::new("solve_densities", nodes), &system, |b, s| {
            b.iter(|| solve_densities(black_box(s), &h).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("cgpt_8", nodes), &system, |b, s| {
            b.iter(|| cgpt(black_box(s), 8).unwrap())
        });
    }
    let system = assemble(&d.to_shape(128), 128).unwrap();
    group.bench_function("np_spectrum/128", |b| b.iter(|| np_spectrum(black_box(&system))));
    group.finish();
}

fn inversion(c: &mut Criterion) {
    let d = three_layer();
    let m = circle_measurement(&d, &full_background(20, 5.0), 5.0, 2048);
    let options = InverseOptions { layers: 3, ..InverseOptions::default() };
    let mut group = c.benchmark_group("inverse");
    group.sample_size(10);
    group.bench_function("three_layer/2048", |b| b.iter(|| invert(black_box(&m), &options).unwrap()));
    group.finish();
}

criterion_group!(benches, analytic, boundary_integral, inversion);
criterion_main!(benches);
