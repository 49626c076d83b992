use criterion::{black_box, criterion_group, criterion_main, Criterion};

use pmdrift_core::grid::{discrete_laplacian, mollify, positivity_set};
use pmdrift_core::infconv::{inf_convolution, RadiusField};
use pmdrift_core::solver::step_density;
use pmdrift_core::streamlines::integrate_streamline;
use pmdrift_core::{Boundary, DriftSpec, Field, GridSpec, Role, SolverParams};

fn bump(g: &GridSpec) -> Field {
    Field::from_fn(g, Role::Density, |x| (0.25 - x[0] * x[0] - x[1] * x[1]).max(0.0))
}

fn solver_step(c: &mut Criterion) {
    let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [128, 128]).unwrap();
    let rho = bump(&g);
    let drift = DriftSpec::laminar_sine(1.0, 2.0);
    let params = SolverParams::new(2.0, 0.0, 1.0);
    c.bench_function("step_density 128x128", |b| {
        b.iter(|| step_density(black_box(&rho), &drift, &params, &Boundary::closed(), 0.0, 1e-6).unwrap())
    });
}

fn laplacian(c: &mut Criterion) {
    let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [256, 256]).unwrap();
    let u = bump(&g);
    c.bench_function("mollified laplacian 256x256", |b| {
        b.iter(|| discrete_laplacian(&mollify(black_box(&u), 3.0 * g.dx()).unwrap()))
    });
    c.bench_function("positivity set and contour 256x256", |b| b.iter(|| positivity_set(black_box(&u), 1e-8)));
}

fn infconv(c: &mut Criterion) {
    let g = GridSpec::rect([-1.0, -1.0], [1.0, 1.0], [64, 64]).unwrap();
    let h = Field::from_fn(&g, Role::Scalar, |x| x[0] + 0.1 * (3.0 * x[1]).sin());
    let psi = RadiusField::from_fn(&g, |x| 0.05 + 0.02 * (x[0] * x[0] + x[1] * x[1])).unwrap();
    c.bench_function("inf_convolution 64x64", |b| b.iter(|| inf_convolution(black_box(&h), &psi).unwrap()));
}

fn streamline(c: &mut Criterion) {
    let g = GridSpec::rect([-2.0, -2.0], [2.0, 2.0], [128, 128]).unwrap();
    let drift = DriftSpec::laminar_sine(1.0, 2.0);
    c.bench_function("streamline over unit time", |b| {
        b.iter(|| integrate_streamline(black_box([0.1, 0.2]), 0.0, 1.0, &drift, 1e-3, Some(&g)).unwrap())
    });
}

criterion_group!(benches, solver_step, laplacian, infconv, streamline);
criterion_main!(benches);
