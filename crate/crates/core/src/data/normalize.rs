use serde::{Deserialize, Serialize};

use super::{PouringSequence, INPUT_WIDTH};
use crate::activation::Activation;
use crate::error::{Error, Result};

/// Training-set statistics used to scale inputs and targets.
///
/// Inputs are z-scored per feature. Targets are min-max scaled into the range
/// of the output head: [0, 1] for sigmoid, [-1, 1] for tanh, untouched for
/// linear. Values outside the training range (e.g. from a test set) map
/// outside those intervals; nothing is clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mode: Activation,
    pub target_min: f64,
    pub target_max: f64,
    pub input_mean: [f64; INPUT_WIDTH],
    pub input_std: [f64; INPUT_WIDTH],
}

impl NormalizationSpec {
    pub fn normalize_target(&self, f: f64) -> f64 {
        let span = self.target_max - self.target_min;
        match self.mode {
            Activation::Linear => f,
            Activation::Sigmoid => (f - self.target_min) / span,
            Activation::Tanh => 2.0 * (f - self.target_min) / span - 1.0,
        }
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        let span = self.target_max - self.target_min;
        match self.mode {
            Activation::Linear => y,
            Activation::Sigmoid => y * span + self.target_min,
            Activation::Tanh => (y + 1.0) / 2.0 * span + self.target_min,
        }
    }

    pub fn normalize_inputs(&self, raw: &[f64; INPUT_WIDTH]) -> [f64; INPUT_WIDTH] {
        let mut out = [0.0; INPUT_WIDTH];
        for k in 0..INPUT_WIDTH {
            out[k] = (raw[k] - self.input_mean[k]) / self.input_std[k];
        }
        out
    }

    pub fn denormalize_inputs(&self, z: &[f64; INPUT_WIDTH]) -> [f64; INPUT_WIDTH] {
        let mut out = [0.0; INPUT_WIDTH];
        for k in 0..INPUT_WIDTH {
            out[k] = z[k] * self.input_std[k] + self.input_mean[k];
        }
        out
    }
}

/// Fits target range and per-feature input moments on `train`.
///
/// Input moments are taken over every real timestep, so the statics of long
/// sequences weigh more. A feature with zero variance gets a unit scale.
pub fn fit_normalization(train: &[PouringSequence], mode: Activation) -> Result<NormalizationSpec> {
    let count: usize = train.iter().map(|s| s.len()).sum();
    if train.is_empty() || count == 0 {
        return Err(Error::invalid("cannot fit normalization on an empty training set"));
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for f in train.iter().flat_map(|s| s.steps.iter().map(|st| st.f_lbf)) {
        lo = lo.min(f);
        hi = hi.max(f);
    }
    if !(hi > lo) {
        return Err(Error::DegenerateRange(lo));
    }

    let mut sum = [0.0; INPUT_WIDTH];
    for seq in train {
        for t in 0..seq.len() {
            for (acc, v) in sum.iter_mut().zip(seq.input_row(t)) {
                *acc += v;
            }
        }
    }
    let mean = sum.map(|s| s / count as f64);

    let mut sq = [0.0; INPUT_WIDTH];
    for seq in train {
        for t in 0..seq.len() {
            for (k, v) in seq.input_row(t).into_iter().enumerate() {
                let d = v - mean[k];
                sq[k] += d * d;
            }
        }
    }
    let std = sq.map(|s| {
        let sd = (s / count as f64).sqrt();
        if sd > 0.0 && sd.is_finite() {
            sd
        } else {
            1.0
        }
    });

    Ok(NormalizationSpec { mode, target_min: lo, target_max: hi, input_mean: mean, input_std: std })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::{StaticFeatures, TimeStep};

    fn seq_with_weights(id: &str, weights: &[f64]) -> PouringSequence {
        PouringSequence {
            id: id.into(),
            steps: weights
                .iter()
                .enumerate()
                .map(|(t, &f)| TimeStep { theta_deg: 10.0 * t as f64, f_lbf: f })
                .collect(),
            statics: StaticFeatures {
                f_init: 1.2,
                f_empty: 0.2,
                f_final: 0.2,
                d_cup: 80.0,
                h_cup: 100.0,
                d_cta: 70.0,
                h_cta: 90.0,
                rho: 1.0,
            },
        }
    }

    fn spanning() -> Vec<PouringSequence> {
        vec![seq_with_weights("a", &[1.2, 0.9, 0.2]), seq_with_weights("b", &[0.7, 0.5])]
    }

    #[test]
    fn target_scaling_examples() {
        let sig = fit_normalization(&spanning(), Activation::Sigmoid).unwrap();
        assert!((sig.normalize_target(0.7) - 0.5).abs() < 1e-15);
        let tanh = fit_normalization(&spanning(), Activation::Tanh).unwrap();
        assert_eq!(tanh.normalize_target(0.2), -1.0);
        assert_eq!(tanh.normalize_target(1.2), 1.0);
        let lin = fit_normalization(&spanning(), Activation::Linear).unwrap();
        assert_eq!(lin.normalize_target(0.7), 0.7);
    }

    #[test]
    fn degenerate_targets_are_rejected() {
        let flat = vec![seq_with_weights("a", &[0.5, 0.5]), seq_with_weights("b", &[0.5])];
        assert!(matches!(fit_normalization(&flat, Activation::Sigmoid), Err(Error::DegenerateRange(_))));
        assert!(fit_normalization(&[], Activation::Tanh).is_err());
    }

    #[test]
    fn inputs_are_standardized_over_real_steps() {
        let spec = fit_normalization(&spanning(), Activation::Linear).unwrap();
        let data = spanning();
        let mut z: Vec<[f64; INPUT_WIDTH]> = Vec::new();
        for s in &data {
            for t in 0..s.len() {
                z.push(spec.normalize_inputs(&s.input_row(t)));
            }
        }
        // theta has spread; the statics are constant here and keep unit scale.
        let mean: f64 = z.iter().map(|r| r[0]).sum::<f64>() / z.len() as f64;
        let var: f64 = z.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert_eq!(spec.input_std[8], 1.0);
        assert!(z.iter().all(|r| r[8] == 0.0));
    }

    proptest! {
        #[test]
        fn target_round_trip(x in -10.0f64..10.0, lo in -5.0f64..5.0, span in 1e-3f64..10.0) {
            for mode in Activation::ALL {
                let spec = NormalizationSpec {
                    mode,
                    target_min: lo,
                    target_max: lo + span,
                    input_mean: [0.0; INPUT_WIDTH],
                    input_std: [1.0; INPUT_WIDTH],
                };
                let back = spec.denormalize_target(spec.normalize_target(x));
                prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(lo.abs()).max(1.0));
            }
        }

        #[test]
        fn training_targets_land_in_head_range(weights in prop::collection::vec(0.0f64..5.0, 2..40)) {
            prop_assume!(weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                > weights.iter().cloned().fold(f64::INFINITY, f64::min));
            let train = vec![seq_with_weights("p", &weights)];
            let sig = fit_normalization(&train, Activation::Sigmoid).unwrap();
            let tanh = fit_normalization(&train, Activation::Tanh).unwrap();
            for &w in &weights {
                let s = sig.normalize_target(w);
                let t = tanh.normalize_target(w);
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert!((-1.0..=1.0).contains(&t));
            }
        }
    }
}
