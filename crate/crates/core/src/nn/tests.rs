use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{NormalizationSpec, PaddedBatch, INPUT_WIDTH};
use crate::linalg::Matrix;
use crate::optim::mse_loss;
use crate::Activation;

const VARIANTS: [(CellKind, Activation); 6] = [
    (CellKind::Lstm, Activation::Sigmoid),
    (CellKind::Lstm, Activation::Linear),
    (CellKind::Lstm, Activation::Tanh),
    (CellKind::Gru, Activation::Sigmoid),
    (CellKind::Gru, Activation::Linear),
    (CellKind::Gru, Activation::Tanh),
];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn loss_and_grads(
    params: &NetworkParams,
    config: &NetworkConfig,
    batch: &PaddedBatch,
    mode: Mode,
    seed: u64,
) -> (Matrix, f64, NetworkParams) {
    let (pred, cache) = network_forward(params, config, batch, mode, &mut rng(seed)).unwrap();
    let (loss, d_pred) = mse_loss(&pred, &batch.targets, &batch.mask).unwrap();
    let grads = network_backward(params, config, &cache, &d_pred, &batch.mask).unwrap();
    (pred, loss, grads)
}

/// Same batch with `extra` more all-zero timesteps appended.
fn extend_padding(batch: &PaddedBatch, extra: usize) -> PaddedBatch {
    let (time, bsz) = (batch.time_len(), batch.batch_size());
    let mut inputs = batch.inputs.clone();
    inputs.extend((0..extra).map(|_| Matrix::zeros(bsz, INPUT_WIDTH)));
    let grow = |m: &Matrix| Matrix::from_fn(time + extra, bsz, |t, b| if t < time { m.get(t, b) } else { 0.0 });
    PaddedBatch { inputs, targets: grow(&batch.targets), mask: grow(&batch.mask), lengths: batch.lengths.clone() }
}

#[test]
fn bptt_matches_finite_differences_in_train_mode() {
    for (cell, head) in VARIANTS {
        for seed in [0, 7] {
            let cmp = gradient_check(cell, head, seed, 1e-5).unwrap();
            assert!(cmp.max_relative_error <= 1e-4, "{cell}-{head} seed {seed}: {cmp:?}");
            assert!(cmp.scalars > 0);
        }
    }
}

#[test]
fn bptt_matches_finite_differences_in_eval_mode() {
    for (cell, head) in VARIANTS {
        let (params, config, batch) = small_check_setup(cell, head, 3).unwrap();
        let (_, _, analytic) = loss_and_grads(&params, &config, &batch, Mode::Eval, 0);
        let numeric = numerical_gradient(&params, 1e-5, |p| {
            let (pred, _) = network_forward(p, &config, &batch, Mode::Eval, &mut rng(0)).unwrap();
            mse_loss(&pred, &batch.targets, &batch.mask).unwrap().0
        });
        let cmp = compare_gradients(&analytic, &numeric);
        assert!(cmp.max_relative_error <= 1e-4, "{cell}-{head}: {cmp:?}");
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    for (cell, head) in VARIANTS {
        let (params, config, batch) = small_check_setup(cell, head, 1).unwrap();
        let (pred, cache) = network_forward(&params, &config, &batch, Mode::Train, &mut rng(5)).unwrap();
        let zero = pred.zeros_like();
        let grads = network_backward(&params, &config, &cache, &zero, &batch.mask).unwrap();
        assert!(grads.to_flat().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn extra_padding_changes_nothing() {
    for (cell, head) in VARIANTS {
        for mode in [Mode::Eval, Mode::Train] {
            let (params, config, batch) = small_check_setup(cell, head, 11).unwrap();
            let long = extend_padding(&batch, batch.time_len());
            let (p1, l1, g1) = loss_and_grads(&params, &config, &batch, mode, 42);
            let (p2, l2, g2) = loss_and_grads(&params, &config, &long, mode, 42);
            for (b, &len) in batch.lengths.iter().enumerate() {
                for t in 0..len {
                    assert_eq!(p1.get(t, b).to_bits(), p2.get(t, b).to_bits());
                }
            }
            assert_eq!(l1.to_bits(), l2.to_bits());
            assert_eq!(g1, g2);
        }
    }
}

#[test]
fn eval_mode_ignores_the_rng() {
    for (cell, head) in VARIANTS {
        let (params, config, batch) = small_check_setup(cell, head, 2).unwrap();
        let (a, _) = network_forward(&params, &config, &batch, Mode::Eval, &mut rng(1)).unwrap();
        let (b, _) = network_forward(&params, &config, &batch, Mode::Eval, &mut rng(2)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn train_mode_is_reproducible_from_the_seed() {
    let (params, config, batch) = small_check_setup(CellKind::Lstm, Activation::Tanh, 2).unwrap();
    let (a, _) = network_forward(&params, &config, &batch, Mode::Train, &mut rng(9)).unwrap();
    let (b, _) = network_forward(&params, &config, &batch, Mode::Train, &mut rng(9)).unwrap();
    let (c, _) = network_forward(&params, &config, &batch, Mode::Train, &mut rng(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn head_outputs_respect_their_ranges() {
    for (cell, head) in VARIANTS {
        let (mut params, config, batch) = small_check_setup(cell, head, 4).unwrap();
        // Push the head hard so saturation would show up.
        for w in params.head_w.as_mut_slice() {
            *w *= 5.0;
        }
        let (pred, _) = network_forward(&params, &config, &batch, Mode::Eval, &mut rng(0)).unwrap();
        for &y in pred.as_slice() {
            assert!(y.is_finite());
            match head {
                Activation::Sigmoid => assert!((0.0..=1.0).contains(&y)),
                Activation::Tanh => assert!((-1.0..=1.0).contains(&y)),
                Activation::Linear => {}
            }
        }
    }
}

#[test]
fn dropout_is_unbiased_in_expectation() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let mut config = NetworkConfig::new(cell, Activation::Linear);
        config.layer_widths = vec![4, 4];
        config.dropout_after = [2].into_iter().collect();
        config.dropout_rate = 0.5;
        let params = init_params(&config, 3).unwrap();
        let mut r = rng(8);
        let inputs = vec![Matrix::from_fn(1, INPUT_WIDTH, |_, _| r.random_range(-1.0..1.0)); 3];
        let batch =
            PaddedBatch { inputs, targets: Matrix::zeros(3, 1), mask: Matrix::filled(3, 1, 1.0), lengths: vec![3] };

        let (eval, _) = network_forward(&params, &config, &batch, Mode::Eval, &mut rng(0)).unwrap();
        let draws = 20_000;
        let mut master = rng(123);
        let samples: Vec<f64> = (0..draws)
            .map(|_| network_forward(&params, &config, &batch, Mode::Train, &mut master).unwrap().0.get(2, 0))
            .collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!((mean - eval.get(2, 0)).abs() <= 3.0 * se, "{cell}: mean {mean} eval {} se {se}", eval.get(2, 0));
    }
}

#[test]
fn dropped_units_receive_no_gradient() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let mut config = NetworkConfig::new(cell, Activation::Tanh);
        config.layer_widths = vec![6];
        config.dropout_after = [1].into_iter().collect();
        config.dropout_rate = 0.5;
        let params = init_params(&config, 5).unwrap();
        let mut r = rng(6);
        let batch = PaddedBatch {
            inputs: vec![Matrix::from_fn(1, INPUT_WIDTH, |_, _| r.random_range(-1.0..1.0))],
            targets: Matrix::filled(1, 1, 0.3),
            mask: Matrix::filled(1, 1, 1.0),
            lengths: vec![1],
        };
        let (pred, cache) = network_forward(&params, &config, &batch, Mode::Train, &mut rng(17)).unwrap();
        let (_, d_pred) = mse_loss(&pred, &batch.targets, &batch.mask).unwrap();
        let grads = network_backward(&params, &config, &cache, &d_pred, &batch.mask).unwrap();

        let mask = &cache.layers[0].dropout.as_ref().unwrap()[0];
        let dropped: Vec<usize> = (0..6).filter(|&k| mask.get(0, k) == 0.0).collect();
        let kept: Vec<usize> = (0..6).filter(|&k| mask.get(0, k) != 0.0).collect();
        assert!(!dropped.is_empty() && !kept.is_empty(), "seed gives a degenerate mask");
        let g = &grads.layers[0];
        for &k in &dropped {
            assert_eq!(grads.head_w.get(0, k), 0.0);
            for gate in 0..cell.gates() {
                let row = gate * 6 + k;
                assert!(g.w.row(row).iter().all(|&x| x == 0.0));
                assert_eq!(g.b[row], 0.0);
            }
        }
        assert!(kept.iter().any(|&k| grads.head_w.get(0, k) != 0.0));
    }
}

#[test]
fn numerical_gradient_of_a_quadratic() {
    let config = NetworkConfig::new(CellKind::Gru, Activation::Linear);
    let mut params = NetworkParams::zeros(&config);
    *params.scalar_mut(0) = 3.0;
    let grads = numerical_gradient(&params, 1e-5, |p| p.to_flat()[0].powi(2));
    let flat = grads.to_flat();
    assert!((flat[0] - 6.0).abs() < 1e-6, "{}", flat[0]);
    assert!(flat[1..].iter().all(|&g| g == 0.0));
}

#[test]
fn numerical_gradient_vanishes_at_a_minimum() {
    let config = NetworkConfig::new(CellKind::Lstm, Activation::Sigmoid);
    let centre = init_params(&config, 1).unwrap();
    let c = centre.to_flat();
    let grads = numerical_gradient(&centre, 1e-4, |p| p.to_flat().iter().zip(&c).map(|(x, y)| (x - y).powi(2)).sum());
    assert!(grads.to_flat().iter().all(|g| g.abs() < 1e-9));
}

#[test]
fn sequential_and_parallel_numerical_gradients_agree() {
    let (params, config, batch) = small_check_setup(CellKind::Gru, Activation::Sigmoid, 0).unwrap();
    let loss = |p: &NetworkParams| {
        let (pred, _) = network_forward(p, &config, &batch, Mode::Eval, &mut rng(0)).unwrap();
        mse_loss(&pred, &batch.targets, &batch.mask).unwrap().0
    };
    let a = numerical_gradient_with(&params, 1e-5, loss, crate::Exec::Sequential);
    let b = numerical_gradient_with(&params, 1e-5, loss, crate::Exec::Parallel);
    assert_eq!(a, b);
}

#[test]
fn backward_rejects_a_foreign_cache() {
    let (params, config, batch) = small_check_setup(CellKind::Lstm, Activation::Tanh, 0).unwrap();
    let (gp, gc, gb) = small_check_setup(CellKind::Gru, Activation::Tanh, 0).unwrap();
    let (pred, cache) = network_forward(&gp, &gc, &gb, Mode::Eval, &mut rng(0)).unwrap();
    assert!(network_backward(&params, &config, &cache, &pred, &batch.mask).is_err());
}

fn sample_spec(mode: Activation) -> NormalizationSpec {
    NormalizationSpec {
        mode,
        target_min: 0.2,
        target_max: 1.7,
        input_mean: [0.1, 1.2, 0.3, 0.5, 90.0, 100.0, 70.0, 95.0, 0.9],
        input_std: [30.0, 0.4, 0.1, 0.2, 15.0, 20.0, 10.0, 12.0, 1.0],
    }
}

#[test]
fn checkpoint_round_trips_exactly() {
    for (cell, head) in VARIANTS {
        let config = NetworkConfig::new(cell, head);
        let params = init_params(&config, 77).unwrap();
        let ckpt = Checkpoint::new(config, sample_spec(head), params);
        let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(back, ckpt);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&ckpt, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ckpt);
    }
}

#[test]
fn checkpoint_rejects_inconsistent_content() {
    let config = NetworkConfig::new(CellKind::Gru, Activation::Tanh);
    let params = init_params(&config, 0).unwrap();
    let ckpt = Checkpoint::new(config.clone(), sample_spec(Activation::Sigmoid), params.clone());
    assert!(Checkpoint::from_json(&ckpt.to_json().unwrap()).is_err());

    let mut wrong = Checkpoint::new(config, sample_spec(Activation::Tanh), params);
    wrong.params.head_b.push(0.0);
    assert!(Checkpoint::from_json(&wrong.to_json().unwrap()).is_err());

    let mut other = wrong.clone();
    other.params.head_b.pop();
    other.format = "something-else".into();
    assert!(Checkpoint::from_json(&other.to_json().unwrap()).is_err());
    assert!(Checkpoint::from_json("{ not json").is_err());
}

#[test]
fn train_mode_without_dropout_equals_eval_mode() {
    for (cell, head) in VARIANTS {
        let (params, mut config, batch) = small_check_setup(cell, head, 6).unwrap();
        config.dropout_rate = 0.0;
        let (_, train_loss, train_grads) = loss_and_grads(&params, &config, &batch, Mode::Train, 3);
        let (_, eval_loss, eval_grads) = loss_and_grads(&params, &config, &batch, Mode::Eval, 3);
        assert_eq!(train_loss.to_bits(), eval_loss.to_bits());
        assert_eq!(train_grads, eval_grads);
    }
}
