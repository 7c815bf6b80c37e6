//! Synthetic pouring demonstrations.
//!
//! The recorded demonstrations are not public, so training and evaluation run
//! on generated data. Each pour tilts a cylindrical cup along a sigmoid-shaped
//! angle ramp. Nothing leaves the cup until the liquid surface reaches the rim
//! (the spill angle, which depends on how full the cup is); after that the
//! retained fraction follows the rectangular cross-section model:
//!
//! ```text
//! R(θ) = 1 − d·tanθ / 2h      while d·tanθ ≤ h
//! R(θ) = h / (2d·tanθ)        afterwards (0 from 90° on)
//! ```
//!
//! None of the defaults claim fidelity to a real rig.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{PouringSequence, StaticFeatures, TimeStep};
use crate::error::{Error, Result};
use crate::par::Exec;

/// Cubic millimetres of water per lbf.
const MM3_PER_LBF_WATER: f64 = 453_592.37;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Density relative to water.
    pub density: f64,
}

impl Material {
    pub fn new(name: &str, density: f64) -> Self {
        Material { name: name.to_string(), density }
    }
}

/// Closed interval `[lo, hi]` sampled uniformly.
pub type Range = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub num_sequences: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub materials: Vec<Material>,
    pub d_cup: Range,
    pub h_cup: Range,
    pub d_cta: Range,
    pub h_cta: Range,
    /// Weight of the empty pouring cup, lbf.
    pub empty_weight: Range,
    /// Weight of the material loaded into the pouring cup, lbf.
    pub fill_weight: Range,
    /// Final tilt of the pour, degrees.
    pub max_angle: Range,
    /// Standard deviation of the additive observation noise, lbf.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            num_sequences: 200,
            len_min: 30,
            len_max: 80,
            materials: vec![
                Material::new("water", 1.0),
                Material::new("beans", 0.85),
                Material::new("ice", 0.92),
            ],
            d_cup: (70.0, 130.0),
            h_cup: (60.0, 140.0),
            d_cta: (55.0, 90.0),
            h_cta: (70.0, 120.0),
            empty_weight: (0.2, 0.6),
            fill_weight: (0.2, 0.9),
            max_angle: (45.0, 130.0),
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.len_min < 5 {
            return Err(Error::invalid(format!("len_min must be >= 5 (got {})", self.len_min)));
        }
        if self.len_max < self.len_min {
            return Err(Error::invalid("len_max must be >= len_min"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid(format!("noise_std must be >= 0 (got {})", self.noise_std)));
        }
        if self.materials.is_empty() {
            return Err(Error::invalid("at least one material is required"));
        }
        if let Some(m) = self.materials.iter().find(|m| !(m.density > 0.0 && m.density.is_finite())) {
            return Err(Error::invalid(format!("material `{}` needs a positive density", m.name)));
        }
        for (name, (lo, hi)) in [
            ("d_cup", self.d_cup),
            ("h_cup", self.h_cup),
            ("d_cta", self.d_cta),
            ("h_cta", self.h_cta),
            ("empty_weight", self.empty_weight),
            ("fill_weight", self.fill_weight),
            ("max_angle", self.max_angle),
        ] {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} range must satisfy 0 < lo < hi (got [{lo}, {hi}])")));
            }
        }
        Ok(())
    }
}

/// Everything needed to render one pour; sampled by [`sample_plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct PourPlan {
    pub id: String,
    pub len: usize,
    pub statics: StaticFeatures,
    pub theta_max: f64,
    /// Angle at which material starts leaving the cup, degrees.
    pub spill_angle: f64,
    /// Steepness of the sigmoid angle ramp.
    pub ramp_steepness: f64,
}

/// Retained fraction of a tilted `diameter × height` cup filled to the brim.
pub fn retained_fraction(theta_deg: f64, diameter: f64, height: f64) -> f64 {
    if theta_deg <= 0.0 {
        return 1.0;
    }
    if theta_deg >= 90.0 {
        return 0.0;
    }
    let run = diameter * (theta_deg * PI / 180.0).tan();
    if run <= height {
        1.0 - run / (2.0 * height)
    } else {
        height / (2.0 * run)
    }
}

/// Inverse of [`retained_fraction`] in `θ`: the tilt at which a cup holding
/// `fill` of its volume starts to spill.
pub fn spill_angle(fill: f64, diameter: f64, height: f64) -> f64 {
    let tan = if fill >= 0.5 {
        2.0 * height * (1.0 - fill) / diameter
    } else {
        height / (2.0 * diameter * fill)
    };
    tan.atan() * 180.0 / PI
}

/// Monotone ramp from exactly 0 at `u = 0` to exactly 1 at `u = 1`.
fn sigmoid_ramp(u: f64, k: f64) -> f64 {
    let s = |x: f64| 1.0 / (1.0 + (-x).exp());
    let lo = s(-k / 2.0);
    let hi = s(k / 2.0);
    (s(k * (u - 0.5)) - lo) / (hi - lo)
}

fn uniform(rng: &mut impl Rng, (lo, hi): Range) -> f64 {
    rng.random_range(lo..=hi)
}

pub fn sample_plan(params: &SynthParams, id: String, rng: &mut impl Rng) -> Result<PourPlan> {
    params.validate()?;
    let len = rng.random_range(params.len_min..=params.len_max);
    let material = &params.materials[rng.random_range(0..params.materials.len())];
    let d_cup = uniform(rng, params.d_cup);
    let h_cup = uniform(rng, params.h_cup);
    let d_cta = uniform(rng, params.d_cta);
    let h_cta = uniform(rng, params.h_cta);
    let f_empty = uniform(rng, params.empty_weight);
    let mut fill_weight = uniform(rng, params.fill_weight);
    let theta_max = uniform(rng, params.max_angle);
    let ramp_steepness = rng.random_range(5.0..=10.0);

    // Cap the load at 98% of the cup volume.
    let capacity = PI * (d_cta / 2.0).powi(2) * h_cta;
    let volume = fill_weight * MM3_PER_LBF_WATER / material.density;
    let mut fill = volume / capacity;
    if fill > 0.98 {
        fill = 0.98;
        fill_weight = fill * capacity * material.density / MM3_PER_LBF_WATER;
    }
    let spill = spill_angle(fill, d_cta, h_cta);

    let f_init = f_empty + fill_weight;
    let f_final = if spill < theta_max {
        let kept = (retained_fraction(theta_max, d_cta, h_cta) / fill).min(1.0);
        (f_empty + fill_weight * kept).clamp(f_empty, f_init)
    } else {
        f_init
    };

    Ok(PourPlan {
        id,
        len,
        statics: StaticFeatures { f_init, f_empty, f_final, d_cup, h_cup, d_cta, h_cta, rho: material.density },
        theta_max,
        spill_angle: spill,
        ramp_steepness,
    })
}

/// Noiseless angle and weight trajectories for a plan.
pub fn latent_trajectory(plan: &PourPlan) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = &plan.statics;
    if plan.len < 2 {
        return Err(Error::invalid("a pour needs at least two steps"));
    }
    if !(plan.theta_max > 0.0) {
        return Err(Error::invalid("theta_max must be positive"));
    }
    if plan.spill_angle >= plan.theta_max && s.f_final != s.f_init {
        return Err(Error::invalid("a pour that never reaches its spill angle must keep f_final == f_init"));
    }
    s.validate()?;

    let last = (plan.len - 1) as f64;
    let thetas: Vec<f64> =
        (0..plan.len).map(|t| plan.theta_max * sigmoid_ramp(t as f64 / last, plan.ramp_steepness)).collect();

    let retained = |theta: f64| retained_fraction(theta, s.d_cta, s.h_cta);
    let at_spill = retained(plan.spill_angle);
    let at_end = retained(plan.theta_max);
    let drop = s.f_init - s.f_final;
    let weights = thetas
        .iter()
        .map(|&theta| {
            if theta <= plan.spill_angle || drop == 0.0 {
                s.f_init
            } else {
                let remaining = ((retained(theta) - at_end) / (at_spill - at_end)).clamp(0.0, 1.0);
                (s.f_final + drop * remaining).min(s.f_init)
            }
        })
        .collect();
    Ok((thetas, weights))
}

/// Renders a plan, adding Gaussian observation noise (clamped at `f_empty`).
pub fn render_sequence(plan: &PourPlan, noise_std: f64, rng: &mut impl Rng) -> Result<PouringSequence> {
    let (thetas, weights) = latent_trajectory(plan)?;
    let f_empty = plan.statics.f_empty;
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let steps = thetas
        .into_iter()
        .zip(weights)
        .map(|(theta_deg, f)| {
            let observed = if noise_std > 0.0 { f + noise.sample(rng) } else { f };
            TimeStep { theta_deg, f_lbf: observed.max(f_empty) }
        })
        .collect();
    Ok(PouringSequence { id: plan.id.clone(), steps, statics: plan.statics })
}

pub fn generate_sequence(params: &SynthParams, id: String, rng: &mut impl Rng) -> Result<PouringSequence> {
    let plan = sample_plan(params, id, rng)?;
    render_sequence(&plan, params.noise_std, rng)
}

pub fn generate_dataset(params: &SynthParams) -> Result<Vec<PouringSequence>> {
    generate_dataset_with(params, Exec::default())
}

/// Sequence `i` draws from ChaCha stream `i` of the configured seed, so the
/// output does not depend on the execution policy.
pub fn generate_dataset_with(params: &SynthParams, exec: Exec) -> Result<Vec<PouringSequence>> {
    params.validate()?;
    exec.map_range(params.num_sequences, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64);
        generate_sequence(params, format!("seq-{i:05}"), &mut rng)
    })
    .into_iter()
    .collect()
}
