use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ringcoag::kinetic::{integrate, rhs_majority, rhs_random, KineticState, SolverConfig};
use ringcoag::{exact_asymmetric, exact_symmetric, run_realization, KernelKind};
use ringcoag_bench::{monomer_series, monomers, sim_config};

fn ring(c: &mut Criterion) {
    let mut g = c.benchmark_group("ring_realization");
    for n0 in [100u32, 1000, 10_000] {
        g.bench_with_input(BenchmarkId::from_parameter(n0), &n0, |b, &n0| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                black_box(run_realization(&sim_config(n0, KernelKind::Random, seed)).unwrap())
            })
        });
    }
    g.finish();
}

fn kinetic(c: &mut Criterion) {
    let mut g = c.benchmark_group("kinetic_rhs");
    for len in [256usize, 1024] {
        let state = KineticState::from_spectrum(&monomers(), len).unwrap();
        g.bench_with_input(BenchmarkId::new("random", len), &state, |b, s| {
            b.iter(|| black_box(rhs_random(s)))
        });
        g.bench_with_input(BenchmarkId::new("majority", len), &state, |b, s| {
            b.iter(|| black_box(rhs_majority(s)))
        });
    }
    g.finish();

    let cfg = SolverConfig::new(256, 0.01).unwrap();
    c.bench_function("kinetic_integrate_L256_t4", |b| {
        b.iter(|| black_box(integrate(&monomers(), 4.0, &cfg, KernelKind::Random, None).unwrap()))
    });
}

fn genfun(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_solution");
    for len in [256usize, 1024] {
        let f0 = monomer_series(len);
        g.bench_with_input(BenchmarkId::new("symmetric", len), &f0, |b, f| {
            b.iter(|| black_box(exact_symmetric(f, 10.0).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("asymmetric", len), &f0, |b, f| {
            b.iter(|| black_box(exact_asymmetric(f, f, 10.0).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, ring, kinetic, genfun);
criterion_main!(benches);
