//! Central finite differences, used as an independent oracle for BPTT.

use super::params::NetworkParams;
use crate::par::Exec;

/// `(L(θ + ε) − L(θ − ε)) / 2ε` for every scalar of `params`.
///
/// `loss` must be deterministic in the parameters: use eval mode or re-seed
/// the dropout stream inside the closure.
pub fn numerical_gradient<F>(params: &NetworkParams, epsilon: f64, loss: F) -> NetworkParams
where
    F: Fn(&NetworkParams) -> f64 + Sync + Send,
{
    numerical_gradient_with(params, epsilon, loss, Exec::default())
}

pub fn numerical_gradient_with<F>(params: &NetworkParams, epsilon: f64, loss: F, exec: Exec) -> NetworkParams
where
    F: Fn(&NetworkParams) -> f64 + Sync + Send,
{
    assert!(epsilon > 0.0, "finite-difference step must be positive");
    let n = params.num_scalars();
    let slopes = exec.map_range(n, |i| {
        let mut probe = params.clone();
        let base = *probe.scalar_mut(i);
        *probe.scalar_mut(i) = base + epsilon;
        let up = loss(&probe);
        *probe.scalar_mut(i) = base - epsilon;
        let down = loss(&probe);
        (up - down) / (2.0 * epsilon)
    });
    let mut grads = params.zeros_like();
    for (i, g) in slopes.into_iter().enumerate() {
        *grads.scalar_mut(i) = g;
    }
    grads
}

/// Scalar-wise comparison of two gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientComparison {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Parameter path of the worst relative error.
    pub worst: String,
    pub scalars: usize,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
///
/// The floor keeps entries that are zero up to round-off (e.g. weights behind
/// a dropped unit) from dividing noise by noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Denominator floor used by [`compare_gradients`].
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn compare_gradients(analytic: &NetworkParams, numeric: &NetworkParams) -> GradientComparison {
    let a = analytic.to_flat();
    let n = numeric.to_flat();
    assert_eq!(a.len(), n.len(), "gradient structures differ");
    let mut out = GradientComparison {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        worst: String::new(),
        scalars: a.len(),
    };
    for (i, (x, y)) in a.iter().zip(&n).enumerate() {
        let rel = relative_error(*x, *y, RELATIVE_ERROR_FLOOR);
        out.max_abs_error = out.max_abs_error.max((x - y).abs());
        if rel > out.max_relative_error || (i == 0 && out.worst.is_empty()) {
            out.max_relative_error = rel;
            out.worst = analytic.scalar_path(i);
        }
    }
    out
}

/// Builds the small network used for gradient checks: two recurrent layers
/// of width 3, dropout after both, `T = 4`, `B = 2` with one sequence padded.
pub fn small_check_setup(
    cell: super::CellKind,
    head: crate::Activation,
    seed: u64,
) -> crate::Result<(NetworkParams, super::NetworkConfig, crate::data::PaddedBatch)> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::data::{PaddedBatch, INPUT_WIDTH};
    use crate::linalg::Matrix;

    let mut config = super::NetworkConfig::new(cell, head);
    config.layer_widths = vec![3, 3];
    config.dropout_after = [1, 2].into_iter().collect();
    config.dropout_rate = 0.3;

    let mut params = super::init_params(&config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    // Non-zero biases so every gate sits away from its symmetric point.
    for layer in &mut params.layers {
        for b in &mut layer.b {
            *b += rng.random_range(-0.5..0.5);
        }
    }
    params.head_b[0] = rng.random_range(-0.5..0.5);

    let (time, batch) = (4, 2);
    let lengths = vec![4, 3];
    let mut inputs = vec![Matrix::zeros(batch, INPUT_WIDTH); time];
    let mut targets = Matrix::zeros(time, batch);
    let mut mask = Matrix::zeros(time, batch);
    let target_lo = if head == crate::Activation::Sigmoid { 0.1 } else { -0.9 };
    for (b, &len) in lengths.iter().enumerate() {
        for t in 0..len {
            for k in 0..INPUT_WIDTH {
                inputs[t].set(b, k, rng.random_range(-1.5..1.5));
            }
            targets.set(t, b, rng.random_range(target_lo..0.9));
            mask.set(t, b, 1.0);
        }
    }
    Ok((params, config, PaddedBatch { inputs, targets, mask, lengths }))
}

/// BPTT against central differences on [`small_check_setup`], with train-mode
/// dropout masks held fixed by re-seeding.
pub fn gradient_check(
    cell: super::CellKind,
    head: crate::Activation,
    seed: u64,
    epsilon: f64,
) -> crate::Result<GradientComparison> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::{network_backward, network_forward, Mode};
    use crate::optim::mse_loss;

    let (params, config, batch) = small_check_setup(cell, head, seed)?;
    let dropout_seed = seed.wrapping_add(1);
    let (pred, cache) =
        network_forward(&params, &config, &batch, Mode::Train, &mut ChaCha8Rng::seed_from_u64(dropout_seed))?;
    let (_, d_pred) = mse_loss(&pred, &batch.targets, &batch.mask)?;
    let analytic = network_backward(&params, &config, &cache, &d_pred, &batch.mask)?;

    let numeric = numerical_gradient(&params, epsilon, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (pred, _) = network_forward(p, &config, &batch, Mode::Train, &mut rng).expect("shapes fixed");
        mse_loss(&pred, &batch.targets, &batch.mask).expect("mask non-empty").0
    });
    Ok(compare_gradients(&analytic, &numeric))
}
