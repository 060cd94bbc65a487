use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng as _;
use vfl_core::dp::{step_moments, MomentMode, DEFAULT_LAMBDA_MAX};
use vfl_core::nat::{hungarian, nat_assign_batch};
use vfl_core::nn::{batch_gradient, per_example_grads, LossKind, MlpSpec, OutputActivation};
use vfl_core::rng::rng_for;
use vfl_core::DenseMatrix;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = rng_for(seed, 0);
    DenseMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn bench_hungarian(c: &mut Criterion) {
    let mut g = c.benchmark_group("hungarian");
    for n in [16, 64, 128] {
        let cost = random_matrix(n, n, n as u64);
        g.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| hungarian(black_box(cost)).unwrap())
        });
    }
    let reprs = random_matrix(64, 8, 1);
    let targets = random_matrix(64, 8, 2);
    g.bench_function("nat_assign_batch_64x8", |b| {
        b.iter(|| nat_assign_batch(black_box(&reprs), &targets).unwrap())
    });
    g.finish();
}

fn bench_accountant(c: &mut Criterion) {
    let mut g = c.benchmark_group("accountant");
    let q = 128.0 / 60000.0;
    for (name, mode) in [("exact", MomentMode::Exact), ("bound", MomentMode::Lemma1Bound)] {
        g.bench_function(name, |b| {
            b.iter(|| step_moments(black_box(q), 1.0, DEFAULT_LAMBDA_MAX, mode).unwrap())
        });
    }
    g.finish();
}

fn bench_mlp(c: &mut Criterion) {
    let mut g = c.benchmark_group("mlp");
    let spec = MlpSpec::relu(20, &[64, 64], 2, OutputActivation::Identity).unwrap();
    let params = spec.init(&mut rng_for(3, 0));
    let x = random_matrix(128, 20, 4);
    let mut y = DenseMatrix::zeros(128, 2);
    for r in 0..128 {
        y.set(r, r % 2, 1.0);
    }
    g.bench_function("batch_gradient_128", |b| {
        b.iter(|| batch_gradient(black_box(&params), &x, &y, LossKind::SoftmaxCrossEntropy).unwrap())
    });
    g.bench_function("per_example_grads_128", |b| {
        b.iter(|| per_example_grads(black_box(&params), &x, &y, LossKind::SoftmaxCrossEntropy).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_hungarian, bench_accountant, bench_mlp);
criterion_main!(benches);
