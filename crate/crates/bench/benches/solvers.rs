use criterion::{black_box, criterion_group, criterion_main, Criterion};
use supercrit_core::diagram::{g_grid, trace};
use supercrit_core::recurrence::RecurrenceTable;
use supercrit_core::shooting::{integrate, Precision, SolverConfig};
use supercrit_core::singular::SingularApprox;
use supercrit_core::GrowthModel;

fn power3() -> GrowthModel {
    GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap()
}

fn shots(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let dd = SolverConfig { precision: Precision::PairedDouble, ..cfg };
    let gelfand = GrowthModel::pure_exp();
    let p3 = power3();
    let ee = GrowthModel::iter_exp(1, 1.0, 0.0).unwrap();
    c.bench_function("shot/gelfand mu=3", |b| b.iter(|| integrate(&gelfand, black_box(3.0), &cfg).unwrap()));
    c.bench_function("shot/power3 mu=4", |b| b.iter(|| integrate(&p3, black_box(4.0), &cfg).unwrap()));
    c.bench_function("shot/power3 mu=4 paired-double", |b| b.iter(|| integrate(&p3, black_box(4.0), &dd).unwrap()));
    c.bench_function("shot/exp-exp mu=3", |b| b.iter(|| integrate(&ee, black_box(3.0), &cfg).unwrap()));
}

fn tables(c: &mut Criterion) {
    c.bench_function("recurrence/q=1.5 k=100", |b| b.iter(|| RecurrenceTable::build(black_box(1.5), 100, 1e-13).unwrap()));
    c.bench_function("recurrence/q=1 k=100", |b| b.iter(|| RecurrenceTable::build(black_box(1.0), 100, 1e-13).unwrap()));
}

fn pipelines(c: &mut Criterion) {
    let cfg = SolverConfig::default();
    let p3 = power3();
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("singular/power3", |b| b.iter(|| SingularApprox::new(&p3).unwrap().construct(&cfg).unwrap()));
    let grid = g_grid(&p3, 0.5, 14.0, 50).unwrap();
    g.bench_function("sweep/power3 50 points", |b| b.iter(|| trace(&p3, black_box(&grid), &cfg, None).unwrap()));
    g.finish();
}

criterion_group!(benches, shots, tables, pipelines);
criterion_main!(benches);
