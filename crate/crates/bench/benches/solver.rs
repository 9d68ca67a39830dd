use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use suspvisc::spectral::{green_apply, GradientScheme, Grid, SymField};
use suspvisc::{solve_corrector, ParticleConfig};
use suspvisc_bench::{bench_solver, rsa_config, shear};

fn corrector(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_corrector");
    group.sample_size(10);
    for n in [32usize, 64] {
        let config = rsa_config(2, 8.0, 0.1, 11);
        let sc = bench_solver(n);
        group.bench_with_input(BenchmarkId::new("2d", n), &n, |b, _| {
            b.iter(|| solve_corrector(black_box(&config), &shear(), &sc).unwrap())
        });
    }
    let sphere = ParticleConfig::new(3, 4.0, 0.0, 0, vec![[2.0, 2.0, 2.0]]);
    let sc = bench_solver(32);
    group.bench_function("3d_single_sphere_32", |b| {
        b.iter(|| solve_corrector(black_box(&sphere), &shear(), &sc).unwrap())
    });
    group.finish();
}

fn green(c: &mut Criterion) {
    let grid = Grid::new(3, 32, 8.0, GradientScheme::Rotated);
    let mut tau = SymField::zeros(&grid);
    for (k, comp) in tau.comps.iter_mut().enumerate() {
        for (i, v) in comp.iter_mut().enumerate() {
            *v = ((i * (k + 3)) % 17) as f64;
        }
    }
    c.bench_function("green_apply_3d_32", |b| b.iter(|| green_apply(&grid, black_box(&tau), 1.0).unwrap()));
}

criterion_group!(benches, corrector, green);
criterion_main!(benches);
