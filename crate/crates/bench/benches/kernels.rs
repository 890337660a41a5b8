use cmv_bench::half_arc_borg;
use cmv_core::analysis::{spectrum, xi_of_operator_with_sites};
use cmv_core::weyl::schur_plus;
use cmv_core::{c, C64, CmvTruncation, RadialSchedule, SchurOptions, ThetaGrid, Tolerances};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn banded_solve(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("banded_resolvent_solve");
    g.sample_size(10);
    for m in [1usize, 2, 3] {
        let t = CmvTruncation::centered(&half_arc_borg(m), 0, 4096).unwrap();
        let t0 = t.delta(0).unwrap();
        let z = C64::from_polar(0.999, 1.0);
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| t.resolvent_solve(black_box(z), &t0).unwrap())
        });
    }
    g.finish();
}

fn unitary_eig(cr: &mut Criterion) {
    let mut g = cr.benchmark_group("unitary_eig");
    g.sample_size(10);
    for n in [64usize, 256] {
        let t = CmvTruncation::centered(&half_arc_borg(2), 0, n).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| spectrum(black_box(&t), &Tolerances::default()).unwrap())
        });
    }
    g.finish();
}

fn schur_chain(cr: &mut Criterion) {
    let seq = half_arc_borg(2);
    let opts = SchurOptions::default();
    let mut g = cr.benchmark_group("schur_plus");
    for (name, z) in [("gap", c(0.9, 0.0)), ("arc", C64::from_polar(0.999, 3.0))] {
        g.bench_function(name, |b| b.iter(|| schur_plus(&seq, black_box(z), 0, &opts).unwrap()));
    }
    g.finish();
}

fn m11_sweep(cr: &mut Criterion) {
    let seq = half_arc_borg(1);
    let sched = RadialSchedule::single(0.99);
    let mut g = cr.benchmark_group("xi_sweep");
    g.sample_size(10);
    g.bench_function("m1_grid256_sites2048", |b| {
        b.iter(|| xi_of_operator_with_sites(&seq, 0, ThetaGrid::new(256), &sched, 2048).unwrap())
    });
    g.finish();
    let t = CmvTruncation::centered(&seq, 0, 2048).unwrap();
    cr.bench_function("m11_point", |b| b.iter(|| t.m11(black_box(c(0.3, 0.9)), 0).unwrap()));
}

criterion_group!(benches, banded_solve, unitary_eig, schur_chain, m11_sweep);
criterion_main!(benches);
