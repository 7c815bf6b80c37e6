//! Pouring-sequence schema, force helpers, normalization, padding and the
//! train/validation/test split.

mod batch;
mod io;
mod normalize;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{pad_and_batch, pad_and_batch_to, PaddedBatch};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use normalize::{fit_normalization, NormalizationSpec};
pub use split::{split_dataset, split_sizes, DatasetSplit};

/// Number of model inputs per timestep: θ_t followed by the eight statics.
pub const INPUT_WIDTH: usize = 9;

/// Input feature names, in the column order used by [`PouringSequence::input_row`].
pub const INPUT_FEATURES: [&str; INPUT_WIDTH] =
    ["theta", "f_init", "f_empty", "f_final", "d_cup", "h_cup", "d_cta", "h_cta", "rho"];

/// One force/torque sensor sample, force channels only (lbf).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawForceReading {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStep {
    /// Rotation angle of the pouring cup, degrees.
    pub theta_deg: f64,
    /// Sensed weight, lbf.
    pub f_lbf: f64,
}

/// The eight per-sequence constants. Weights in lbf, geometry in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatures {
    pub f_init: f64,
    pub f_empty: f64,
    pub f_final: f64,
    /// Receiving cup.
    pub d_cup: f64,
    pub h_cup: f64,
    /// Pouring cup.
    pub d_cta: f64,
    pub h_cta: f64,
    /// Material density relative to water.
    pub rho: f64,
}

impl StaticFeatures {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.f_init,
            self.f_empty,
            self.f_final,
            self.d_cup,
            self.h_cup,
            self.d_cta,
            self.h_cta,
            self.rho,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let names = &INPUT_FEATURES[1..];
        for (name, v) in names.iter().zip(self.as_array()) {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} is not finite ({v})")));
            }
        }
        if !(self.f_empty <= self.f_final && self.f_final <= self.f_init) {
            return Err(Error::invalid(format!(
                "weights must satisfy f_empty <= f_final <= f_init (got {}, {}, {})",
                self.f_empty, self.f_final, self.f_init
            )));
        }
        for (name, v) in [
            ("d_cup", self.d_cup),
            ("h_cup", self.h_cup),
            ("d_cta", self.d_cta),
            ("h_cta", self.h_cta),
            ("rho", self.rho),
        ] {
            if v <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive (got {v})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PouringSequence {
    pub id: String,
    pub steps: Vec<TimeStep>,
    pub statics: StaticFeatures,
}

impl PouringSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Raw (un-normalized) model inputs at step `t`.
    pub fn input_row(&self, t: usize) -> [f64; INPUT_WIDTH] {
        let s = self.statics.as_array();
        [self.steps[t].theta_deg, s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7]]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.f_lbf).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.theta_deg).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::invalid(format!("sequence `{}` has no steps", self.id)));
        }
        for (t, s) in self.steps.iter().enumerate() {
            if !s.theta_deg.is_finite() {
                return Err(Error::invalid(format!("sequence `{}` step {t}: theta not finite", self.id)));
            }
            if !(s.f_lbf.is_finite() && s.f_lbf >= 0.0) {
                return Err(Error::invalid(format!(
                    "sequence `{}` step {t}: weight must be finite and >= 0 (got {})",
                    self.id, s.f_lbf
                )));
            }
        }
        self.statics.validate()
    }
}

/// Euclidean norm of the three force components.
pub fn sensed_force(r: RawForceReading) -> Result<f64> {
    if !(r.fx.is_finite() && r.fy.is_finite() && r.fz.is_finite()) {
        return Err(Error::invalid(format!("non-finite force reading {r:?}")));
    }
    Ok((r.fx * r.fx + r.fy * r.fy + r.fz * r.fz).sqrt())
}

/// Arithmetic mean of a burst of sensed-force samples (the rig takes 500 in 0.5 s).
pub fn average_initial_force(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot average an empty sample list"));
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn reading(fx: f64, fy: f64, fz: f64) -> RawForceReading {
        RawForceReading { fx, fy, fz }
    }

    #[test]
    fn sensed_force_examples() {
        assert_eq!(sensed_force(reading(3.0, 4.0, 0.0)).unwrap(), 5.0);
        assert_eq!(sensed_force(reading(0.0, 0.0, 0.0)).unwrap(), 0.0);
        // sqrt(3) to 20 digits: 1.7320508075688772935
        let v = sensed_force(reading(1.0, 1.0, 1.0)).unwrap();
        assert!((v - 1.732_050_807_568_877_2).abs() < 1e-15);
    }

    #[test]
    fn sensed_force_rejects_non_finite() {
        assert!(matches!(sensed_force(reading(f64::NAN, 0.0, 0.0)), Err(Error::InvalidInput(_))));
        assert!(sensed_force(reading(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn average_examples() {
        assert_eq!(average_initial_force(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(average_initial_force(&[0.0, 2.0]).unwrap(), 1.0);
        let burst = vec![0.73; 500];
        assert!((average_initial_force(&burst).unwrap() - 0.73).abs() < 1e-12);
        assert!(average_initial_force(&[]).is_err());
    }

    #[test]
    fn statics_ordering_is_enforced() {
        let mut s = StaticFeatures {
            f_init: 1.0,
            f_empty: 0.3,
            f_final: 0.5,
            d_cup: 80.0,
            h_cup: 100.0,
            d_cta: 70.0,
            h_cta: 90.0,
            rho: 1.0,
        };
        assert!(s.validate().is_ok());
        s.f_final = 1.2;
        assert!(s.validate().is_err());
        s.f_final = 0.5;
        s.rho = 0.0;
        assert!(s.validate().is_err());
    }

    proptest! {
        #[test]
        fn sensed_force_ignores_sign_and_order(
            x in -1e3f64..1e3, y in -1e3f64..1e3, z in -1e3f64..1e3,
        ) {
            let base = sensed_force(reading(x, y, z)).unwrap();
            prop_assert!(base >= 0.0);
            let variants = [
                reading(-x, y, z), reading(x, -y, -z),
                reading(y, z, x), reading(z, x, y), reading(z, y, x),
            ];
            for r in variants {
                let v = sensed_force(r).unwrap();
                prop_assert!((v - base).abs() <= 1e-12 * base.max(1.0));
            }
        }
    }
}
