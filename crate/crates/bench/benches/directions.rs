use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fzoo::perturbation::generate_direction;
use fzoo::{DirectionSeed, ParamVector};
use fzoo_bench::seeds;

fn directions(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_direction");
    for d in [1_000usize, 100_000] {
        group.throughput(Throughput::Elements(d as u64));
        group.bench_with_input(BenchmarkId::new("rademacher", d), &d, |b, &d| {
            b.iter(|| generate_direction(DirectionSeed::rademacher(7), d).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gaussian", d), &d, |b, &d| {
            b.iter(|| generate_direction(DirectionSeed::gaussian(7), d).unwrap())
        });
    }
    group.finish();
}

fn seeded_update(c: &mut Criterion) {
    let d = 100_000;
    let s = seeds(8);
    let coeffs = vec![1e-4; 8];
    let mut theta = ParamVector::zeros(d).unwrap();
    let mut group = c.benchmark_group("seeded_update");
    group.throughput(Throughput::Elements((d * s.len()) as u64));
    group.bench_function("apply_update_from_seeds/N=8", |b| {
        b.iter(|| theta.apply_update_from_seeds(&s, &coeffs).unwrap())
    });
    group.bench_function("perturb_restore", |b| {
        b.iter(|| {
            theta.perturb_in_place(s[0], 1e-3).unwrap();
            theta.perturb_in_place(s[0], -1e-3).unwrap();
        })
    });
    group.finish();
}

criterion_group!(benches, directions, seeded_update);
criterion_main!(benches);
