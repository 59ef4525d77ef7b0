use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hatcn::autodiff::{dilated_causal_conv, Tape};
use hatcn::data::generate_synthetic;
use hatcn::explain::explain;
use hatcn::{ExplainSettings, HatcnConfig, HatcnModel, SynthConfig, TensorGrid, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: usize = 750;

fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> TensorGrid {
    TensorGrid::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn series() -> Vec<f64> {
    let cohort = generate_synthetic(&SynthConfig::default()).unwrap();
    cohort.dataset.preprocessed().unwrap().series[0].values.clone()
}

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("conv");
    for channels in [4, 8, 16] {
        let input = random_grid(&mut rng, channels, T);
        let kernel = random_grid(&mut rng, channels, channels * 50);
        let bias = random_grid(&mut rng, channels, 1);
        group.bench_with_input(BenchmarkId::new("forward", channels), &channels, |b, _| {
            b.iter(|| dilated_causal_conv(black_box(&input), &kernel, &bias, 2, 50).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", channels), &channels, |b, _| {
            b.iter(|| {
                let mut tape = Tape::new();
                let (x, k, bb) = (tape.leaf(input.clone()), tape.leaf(kernel.clone()), tape.leaf(bias.clone()));
                let y = tape.conv(x, k, bb, 2, 50).unwrap();
                let s = tape.sum(y);
                tape.backward(s).unwrap();
                black_box(tape.grad(k).get(0, 0))
            })
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let x = series();
    let mut group = c.benchmark_group("model");
    for channels in [4, 8] {
        let cfg = HatcnConfig::new(2, channels, 50, T);
        let model = HatcnModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", channels), &channels, |b, _| {
            b.iter(|| model.forward(black_box(&x)).unwrap().probability)
        });
        group.bench_with_input(BenchmarkId::new("loss_and_gradients", channels), &channels, |b, _| {
            b.iter(|| model.loss_and_gradients(black_box(&x), 1.0, Variant::Hatcn).unwrap().0)
        });
        group.bench_with_input(BenchmarkId::new("explain", channels), &channels, |b, _| {
            b.iter(|| explain(&model, black_box(&x), &ExplainSettings::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, conv, model);
criterion_main!(benches);
