use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fzoo::forward_engine::{batched_perturbed_forward, sequential_perturbed_forward};
use fzoo_bench::{inputs, seeds, tanh_stack};

fn perturbed_forward(c: &mut Criterion) {
    let stack = tanh_stack(64, 128, 10);
    let x = inputs(64, 32);
    let mut group = c.benchmark_group("perturbed_forward");
    for n in [4, 8, 16] {
        let s = seeds(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &s, |b, s| {
            b.iter(|| sequential_perturbed_forward(&stack, &x, s, 1e-3).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("batched", n), &s, |b, s| {
            b.iter(|| batched_perturbed_forward(&stack, &x, s, 1e-3).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, perturbed_forward);
criterion_main!(benches);
