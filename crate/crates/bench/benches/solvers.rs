use criterion::{criterion_group, criterion_main, Criterion};
use twoscale::classical::CorrectorSuite;
use twoscale::expansion::{simple_recursion, ExpansionOptions};
use twoscale::hermite::{default_scale, eigensolve_checked, MacroBasis};
use twoscale::reference::{solve_leps, truncation_radius, ReferenceOptions};
use twoscale::{CoefficientField, CoefficientSpec, SlowPolynomial, TorusGrid};

fn laminate(dim: usize, n: usize) -> CoefficientField {
    let spec = if dim == 1 {
        CoefficientSpec::diagonal(&["2 + cos(2*pi*y)"])
    } else {
        CoefficientSpec::diagonal(&["2 + cos(2*pi*y1)", "1 + 0.5*sin(2*pi*y2)"])
    };
    CoefficientField::from_spec(&spec, TorusGrid::new(dim, n).unwrap(), None).unwrap()
}

fn cell(c: &mut Criterion) {
    let a = laminate(2, 32);
    c.bench_function("corrector_suite_2d_32", |b| b.iter(|| CorrectorSuite::build(&a).unwrap()));
}

fn hermite(c: &mut Criterion) {
    let abar = vec![vec![3f64.sqrt(), 0.0], vec![0.0, 1.0]];
    let w = SlowPolynomial::squared_norm(2);
    let basis = MacroBasis::new(2, 24, default_scale(&abar, &w)).unwrap();
    c.bench_function("hermite_eigensolve_2d_24", |b| b.iter(|| eigensolve_checked(&abar, &w, &basis, 6, None).unwrap()));
}

fn corrector_table(c: &mut Criterion) {
    let a = laminate(1, 64);
    let w = SlowPolynomial::squared_norm(1);
    let abar = vec![vec![3f64.sqrt()]];
    let basis = MacroBasis::new(1, 64, default_scale(&abar, &w)).unwrap();
    let spec = eigensolve_checked(&abar, &w, &basis, 6, None).unwrap();
    c.bench_function("simple_recursion_1d_p3", |b| {
        b.iter(|| simple_recursion(&a, &w, &spec, 1, &ExpansionOptions::new(3)).unwrap())
    });
}

fn fd(c: &mut Criterion) {
    let a = laminate(1, 16);
    let w = SlowPolynomial::squared_norm(1);
    let mut o = ReferenceOptions::new(truncation_radius(1.3, 1.0, 6.5), 3);
    o.h_ratio = 16.0;
    o.error_estimate = false;
    let mut g = c.benchmark_group("fd");
    g.sample_size(10);
    g.bench_function("reference_1d_eps_0.05", |b| b.iter(|| solve_leps(&a, &w, 0.05, &o).unwrap()));
    g.finish();
}

criterion_group!(benches, cell, hermite, corrector_table, fd);
criterion_main!(benches);
