use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pourseq::dtw::score_testset_with;
use pourseq::nn::{init_params, network_forward, numerical_gradient_with, small_check_setup, CellKind, Mode, NetworkConfig};
use pourseq::optim::mse_loss;
use pourseq::synth::{generate_dataset_with, SynthParams};
use pourseq::train::evaluate_model_with;
use pourseq::{Activation, Exec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn synth(c: &mut Criterion) {
    let params = SynthParams { num_sequences: 289, ..SynthParams::default() };
    let mut group = c.benchmark_group("generate_dataset");
    for (name, exec) in EXECS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_dataset_with(black_box(&params), exec).unwrap())
        });
    }
    group.finish();
}

fn dtw(c: &mut Criterion) {
    let data = generate_dataset_with(&SynthParams { num_sequences: 64, ..SynthParams::default() }, Exec::Sequential)
        .unwrap();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> =
        data.windows(2).map(|w| (w[0].weights(), w[1].weights())).collect();
    let mut group = c.benchmark_group("score_testset");
    for (name, exec) in EXECS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| score_testset_with(black_box(&pairs), 1, exec).unwrap())
        });
    }
    group.finish();
}

fn evaluate(c: &mut Criterion) {
    let data = generate_dataset_with(&SynthParams { num_sequences: 64, ..SynthParams::default() }, Exec::Sequential)
        .unwrap();
    let config = NetworkConfig::new(CellKind::Gru, Activation::Tanh);
    let params = init_params(&config, 0).unwrap();
    let spec = pourseq::data::fit_normalization(&data, Activation::Tanh).unwrap();
    let mut group = c.benchmark_group("evaluate_model");
    for (name, exec) in EXECS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_model_with(&params, &config, &spec, black_box(&data), exec).unwrap())
        });
    }
    group.finish();
}

fn finite_differences(c: &mut Criterion) {
    let (params, config, batch) = small_check_setup(CellKind::Lstm, Activation::Sigmoid, 0).unwrap();
    let loss = |p: &pourseq::nn::NetworkParams| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (pred, _) = network_forward(p, &config, &batch, Mode::Eval, &mut rng).unwrap();
        mse_loss(&pred, &batch.targets, &batch.mask).unwrap().0
    };
    let mut group = c.benchmark_group("numerical_gradient");
    for (name, exec) in EXECS {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| numerical_gradient_with(black_box(&params), 1e-5, loss, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, synth, dtw, evaluate, finite_differences);
criterion_main!(benches);
