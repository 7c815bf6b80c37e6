//! Masked mean-squared error and the Adam optimizer.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::NetworkParams;

/// Masked MSE over a `[time × batch]` grid.
///
/// `loss = Σ m·(p − y)² / Σ m`, `∂loss/∂p = 2·m·(p − y) / Σ m`. Cells with
/// `m = 0` are skipped entirely, so appending padding cannot change the value.
pub fn mse_loss(pred: &Matrix, target: &Matrix, mask: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::invalid(format!(
            "shape mismatch: pred {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let weight: f64 = mask.as_slice().iter().filter(|&&m| m != 0.0).sum();
    if weight == 0.0 {
        return Err(Error::invalid("mask selects no cells"));
    }
    let mut sum = 0.0;
    let mut grad = pred.zeros_like();
    let cells = pred.as_slice().iter().zip(target.as_slice()).zip(mask.as_slice());
    for (i, ((&p, &y), &m)) in cells.enumerate() {
        if m == 0.0 {
            continue;
        }
        let d = p - y;
        sum += m * d * d;
        grad.as_mut_slice()[i] = 2.0 * m * d / weight;
    }
    Ok((sum / weight, grad))
}

/// A set of named parameter tensors the optimizer can walk in a fixed order.
pub trait ParamTensors: Clone {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;
    fn zeros_like(&self) -> Self;
}

impl ParamTensors for NetworkParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        NetworkParams::tensors(self)
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        NetworkParams::tensors_mut(self)
    }

    fn zeros_like(&self) -> Self {
        NetworkParams::zeros_like(self)
    }
}

impl ParamTensors for Vec<f64> {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![("theta".to_string(), self.as_slice())]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![("theta".to_string(), self.as_mut_slice())]
    }

    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<P: ParamTensors> AdamState<P> {
    /// Zeroed moments with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &P, lr: f64) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

fn congruent<P: ParamTensors>(a: &P, b: &P) -> bool {
    let (a, b) = (a.tensors(), b.tensors());
    a.len() == b.len() && a.iter().zip(&b).all(|((_, x), (_, y))| x.len() == y.len())
}

/// One bias-corrected Adam update, in place.
///
/// A non-finite gradient aborts before anything is modified and names the
/// offending scalar.
pub fn adam_step<P: ParamTensors>(state: &mut AdamState<P>, params: &mut P, grads: &P) -> Result<()> {
    if !congruent(params, grads) || !congruent(params, &state.m) || !congruent(params, &state.v) {
        return Err(Error::invalid("optimizer state, parameters and gradients are not congruent"));
    }
    for (name, g) in grads.tensors() {
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { path: format!("{name}[{i}]") });
        }
    }

    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let step = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(step);
    let c2 = 1.0 - b2.powi(step);
    let (lr, eps) = (state.lr, state.eps);

    let grads = grads.tensors();
    let mut m = state.m.tensors_mut();
    let mut v = state.v.tensors_mut();
    let mut p = params.tensors_mut();
    for (k, (_, g)) in grads.iter().enumerate() {
        let (mk, vk, pk) = (&mut *m[k].1, &mut *v[k].1, &mut *p[k].1);
        for i in 0..g.len() {
            mk[i] = b1 * mk[i] + (1.0 - b1) * g[i];
            vk[i] = b2 * vk[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = mk[i] / c1;
            let v_hat = vk[i] / c2;
            pk[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
