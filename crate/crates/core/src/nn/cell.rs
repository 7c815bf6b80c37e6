//! Single-timestep LSTM and GRU cells over a batch, with their exact
//! backward passes.
//!
//! LSTM (gate blocks i, f, g, o):
//!   i = σ(W_i x + U_i h + b_i), f = σ(…), g = tanh(…), o = σ(…)
//!   c' = f∘c + i∘g,  h' = o∘tanh(c')
//!
//! GRU (gate blocks z, r, h̃):
//!   z = σ(W_z x + U_z h + b_z), r = σ(…)
//!   h̃ = tanh(W_h x + U_h (r∘h) + b_h)
//!   h' = z∘h + (1 − z)∘h̃

use super::config::CellKind;
use super::params::CellParams;
use crate::error::{Error, Result};
use crate::linalg::{add_a_w, add_at_x, add_x_wt, sigmoid, Matrix};

/// Activations kept from one LSTM step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    /// `[batch × 4·hidden]`, post-activation i, f, g, o.
    pub gates: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
    pub h: Matrix,
}

/// Activations kept from one GRU step.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    /// `[batch × 3·hidden]`, post-activation z, r, h̃.
    pub gates: Matrix,
    /// `r∘h_prev`.
    pub reset_hidden: Matrix,
    pub h: Matrix,
}

fn check_shapes(kind: CellKind, p: &CellParams, x: &Matrix, h_prev: &Matrix) -> Result<()> {
    p.check(kind)?;
    let hidden = p.hidden();
    if x.cols() != p.input() {
        return Err(Error::invalid(format!("{kind} cell expects input width {}, got {}", p.input(), x.cols())));
    }
    if h_prev.shape() != (x.rows(), hidden) {
        return Err(Error::invalid(format!(
            "{kind} cell expects state [{} × {hidden}], got {:?}",
            x.rows(),
            h_prev.shape()
        )));
    }
    Ok(())
}

/// `x·Wᵀ + b` for every gate block.
fn input_preactivation(p: &CellParams, x: &Matrix) -> Matrix {
    let rows = p.w.rows();
    let mut pre = Matrix::zeros(x.rows(), rows);
    add_x_wt(&mut pre, 0, x, &p.w, 0..rows);
    for b in 0..x.rows() {
        for (v, bias) in pre.row_mut(b).iter_mut().zip(&p.b) {
            *v += bias;
        }
    }
    pre
}

pub(crate) fn lstm_step(p: &CellParams, x: &Matrix, h_prev: &Matrix, c_prev: &Matrix) -> LstmStep {
    let hidden = p.hidden();
    let mut gates = input_preactivation(p, x);
    add_x_wt(&mut gates, 0, h_prev, &p.u, 0..4 * hidden);

    let batch = x.rows();
    let mut c = Matrix::zeros(batch, hidden);
    let mut tanh_c = Matrix::zeros(batch, hidden);
    let mut h = Matrix::zeros(batch, hidden);
    for b in 0..batch {
        let g = gates.row_mut(b);
        for k in 0..hidden {
            g[k] = sigmoid(g[k]);
            g[hidden + k] = sigmoid(g[hidden + k]);
            g[2 * hidden + k] = g[2 * hidden + k].tanh();
            g[3 * hidden + k] = sigmoid(g[3 * hidden + k]);
        }
        for k in 0..hidden {
            let (i, f, cand, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
            let cell = f * c_prev.get(b, k) + i * cand;
            let tc = cell.tanh();
            c.set(b, k, cell);
            tanh_c.set(b, k, tc);
            h.set(b, k, o * tc);
        }
    }
    LstmStep { gates, c, tanh_c, h }
}

/// Accumulates parameter gradients into `grads`; returns `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    p: &CellParams,
    grads: &mut CellParams,
    x: &Matrix,
    h_prev: &Matrix,
    c_prev: &Matrix,
    step: &LstmStep,
    dh: &Matrix,
    dc_next: &Matrix,
) -> (Matrix, Matrix, Matrix) {
    let hidden = p.hidden();
    let batch = x.rows();
    let mut da = Matrix::zeros(batch, 4 * hidden);
    let mut dc_prev = Matrix::zeros(batch, hidden);
    for b in 0..batch {
        let g = step.gates.row(b);
        let d = da.row_mut(b);
        for k in 0..hidden {
            let (i, f, cand, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
            let tc = step.tanh_c.get(b, k);
            let dh_k = dh.get(b, k);
            let dc = dc_next.get(b, k) + dh_k * o * (1.0 - tc * tc);
            d[k] = dc * cand * i * (1.0 - i);
            d[hidden + k] = dc * c_prev.get(b, k) * f * (1.0 - f);
            d[2 * hidden + k] = dc * i * (1.0 - cand * cand);
            d[3 * hidden + k] = dh_k * tc * o * (1.0 - o);
            dc_prev.set(b, k, dc * f);
        }
    }
    accumulate_dense(p, grads, x, h_prev, &da, 0..4 * hidden);

    let mut dx = Matrix::zeros(batch, p.input());
    add_a_w(&mut dx, &da, 0, &p.w, 0..4 * hidden);
    let mut dh_prev = Matrix::zeros(batch, hidden);
    add_a_w(&mut dh_prev, &da, 0, &p.u, 0..4 * hidden);
    (dx, dh_prev, dc_prev)
}

pub(crate) fn gru_step(p: &CellParams, x: &Matrix, h_prev: &Matrix) -> GruStep {
    let hidden = p.hidden();
    let batch = x.rows();
    let mut gates = input_preactivation(p, x);
    add_x_wt(&mut gates, 0, h_prev, &p.u, 0..2 * hidden);

    let mut reset_hidden = Matrix::zeros(batch, hidden);
    for b in 0..batch {
        let g = gates.row_mut(b);
        for v in &mut g[..2 * hidden] {
            *v = sigmoid(*v);
        }
        for k in 0..hidden {
            reset_hidden.set(b, k, g[hidden + k] * h_prev.get(b, k));
        }
    }
    add_x_wt(&mut gates, 2 * hidden, &reset_hidden, &p.u, 2 * hidden..3 * hidden);

    let mut h = Matrix::zeros(batch, hidden);
    for b in 0..batch {
        let g = gates.row_mut(b);
        for k in 0..hidden {
            let cand = g[2 * hidden + k].tanh();
            g[2 * hidden + k] = cand;
            let z = g[k];
            h.set(b, k, z * h_prev.get(b, k) + (1.0 - z) * cand);
        }
    }
    GruStep { gates, reset_hidden, h }
}

/// Accumulates parameter gradients into `grads`; returns `(dx, dh_prev)`.
pub(crate) fn gru_step_backward(
    p: &CellParams,
    grads: &mut CellParams,
    x: &Matrix,
    h_prev: &Matrix,
    step: &GruStep,
    dh: &Matrix,
) -> (Matrix, Matrix) {
    let hidden = p.hidden();
    let batch = x.rows();
    let mut da = Matrix::zeros(batch, 3 * hidden);
    let mut dh_prev = Matrix::zeros(batch, hidden);

    // candidate block first: its gradient feeds the reset gate through U_h.
    for b in 0..batch {
        let g = step.gates.row(b);
        for k in 0..hidden {
            let (z, cand) = (g[k], g[2 * hidden + k]);
            let dh_k = dh.get(b, k);
            da.set(b, 2 * hidden + k, dh_k * (1.0 - z) * (1.0 - cand * cand));
            da.set(b, k, dh_k * (h_prev.get(b, k) - cand) * z * (1.0 - z));
            dh_prev.set(b, k, dh_k * z);
        }
    }
    let mut d_reset_hidden = Matrix::zeros(batch, hidden);
    add_a_w(&mut d_reset_hidden, &da, 2 * hidden, &p.u, 2 * hidden..3 * hidden);
    for b in 0..batch {
        let g = step.gates.row(b);
        for k in 0..hidden {
            let r = g[hidden + k];
            let drh = d_reset_hidden.get(b, k);
            da.set(b, hidden + k, drh * h_prev.get(b, k) * r * (1.0 - r));
            let carried = dh_prev.get(b, k) + drh * r;
            dh_prev.set(b, k, carried);
        }
    }

    for (i, v) in grads.b.iter_mut().enumerate() {
        for b in 0..batch {
            *v += da.get(b, i);
        }
    }
    add_at_x(&mut grads.w, 0..3 * hidden, &da, 0, x);
    add_at_x(&mut grads.u, 0..2 * hidden, &da, 0, h_prev);
    add_at_x(&mut grads.u, 2 * hidden..3 * hidden, &da, 2 * hidden, &step.reset_hidden);

    let mut dx = Matrix::zeros(batch, p.input());
    add_a_w(&mut dx, &da, 0, &p.w, 0..3 * hidden);
    add_a_w(&mut dh_prev, &da, 0, &p.u, 0..2 * hidden);
    (dx, dh_prev)
}

fn accumulate_dense(
    p: &CellParams,
    grads: &mut CellParams,
    x: &Matrix,
    h_prev: &Matrix,
    da: &Matrix,
    rows: std::ops::Range<usize>,
) {
    debug_assert_eq!(grads.b.len(), p.b.len());
    for i in rows.clone() {
        let mut acc = 0.0;
        for b in 0..da.rows() {
            acc += da.get(b, i);
        }
        grads.b[i] += acc;
    }
    add_at_x(&mut grads.w, rows.clone(), da, 0, x);
    add_at_x(&mut grads.u, rows, da, 0, h_prev);
}

/// One LSTM step on a batch: `(h, c)` from `(x, h_prev, c_prev)`.
pub fn lstm_cell_forward(p: &CellParams, x: &Matrix, h_prev: &Matrix, c_prev: &Matrix) -> Result<(Matrix, Matrix)> {
    check_shapes(CellKind::Lstm, p, x, h_prev)?;
    if c_prev.shape() != h_prev.shape() {
        return Err(Error::invalid("LSTM cell state shape differs from hidden state shape"));
    }
    let step = lstm_step(p, x, h_prev, c_prev);
    Ok((step.h, step.c))
}

/// One GRU step on a batch.
pub fn gru_cell_forward(p: &CellParams, x: &Matrix, h_prev: &Matrix) -> Result<Matrix> {
    check_shapes(CellKind::Gru, p, x, h_prev)?;
    Ok(gru_step(p, x, h_prev).h)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn filled(rows: usize, cols: usize, v: f64) -> Matrix {
        Matrix::filled(rows, cols, v)
    }

    #[test]
    fn zero_lstm_keeps_zero_state() {
        let p = CellParams::zeros(CellKind::Lstm, 3, 4);
        let x = Matrix::from_fn(2, 3, |r, c| (r + c) as f64 - 1.5);
        let (h, c) = lstm_cell_forward(&p, &x, &filled(2, 4, 0.7), &filled(2, 4, 0.0)).unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell_state() {
        let mut p = CellParams::zeros(CellKind::Lstm, 2, 3);
        for k in 0..3 {
            p.b[3 + k] = 10.0;
            p.b[k] = -10.0;
        }
        let c_prev = Matrix::from_vec(1, 3, vec![0.5, -0.25, 0.9]);
        let (_, c) = lstm_cell_forward(&p, &filled(1, 2, 0.3), &filled(1, 3, 0.1), &c_prev).unwrap();
        // c = σ(10)·v + σ(−10)·tanh(0) = v·(1 − 4.54e-5)
        for k in 0..3 {
            assert!((c.get(0, k) - c_prev.get(0, k)).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_gru_examples() {
        let p = CellParams::zeros(CellKind::Gru, 2, 4);
        let x = filled(1, 2, 0.8);
        let h = gru_cell_forward(&p, &x, &filled(1, 4, 1.0)).unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.5));
        let h = gru_cell_forward(&p, &x, &filled(1, 4, 0.0)).unwrap();
        assert!(h.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_holds_state() {
        let mut p = CellParams::zeros(CellKind::Gru, 2, 3);
        for k in 0..3 {
            p.b[k] = 10.0;
        }
        let h_prev = Matrix::from_vec(1, 3, vec![0.4, -0.8, 0.1]);
        let h = gru_cell_forward(&p, &filled(1, 2, -0.6), &h_prev).unwrap();
        for k in 0..3 {
            assert!((h.get(0, k) - h_prev.get(0, k)).abs() < 1e-4);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = CellParams::zeros(CellKind::Gru, 2, 3);
        assert!(gru_cell_forward(&p, &filled(1, 5, 0.0), &filled(1, 3, 0.0)).is_err());
        assert!(gru_cell_forward(&p, &filled(1, 2, 0.0), &filled(2, 3, 0.0)).is_err());
        let lstm = CellParams::zeros(CellKind::Lstm, 2, 3);
        assert!(lstm_cell_forward(&lstm, &filled(1, 2, 0.0), &filled(1, 3, 0.0), &filled(1, 2, 0.0)).is_err());
        assert!(lstm_cell_forward(&p, &filled(1, 2, 0.0), &filled(1, 3, 0.0), &filled(1, 3, 0.0)).is_err());
    }

    fn random_params(kind: CellKind, input: usize, hidden: usize, vals: &[f64]) -> CellParams {
        let mut p = CellParams::zeros(kind, input, hidden);
        let mut it = vals.iter().cycle();
        for v in p.w.as_mut_slice().iter_mut().chain(p.u.as_mut_slice()).chain(p.b.iter_mut()) {
            *v = *it.next().unwrap();
        }
        p
    }

    proptest! {
        #[test]
        fn gate_activations_stay_in_range(
            vals in prop::collection::vec(-2.0f64..2.0, 16),
            xs in prop::collection::vec(-3.0f64..3.0, 4),
        ) {
            let x = Matrix::from_vec(2, 2, xs);
            let h0 = Matrix::from_fn(2, 3, |r, c| 0.3 * r as f64 - 0.2 * c as f64);
            let lstm = lstm_step(&random_params(CellKind::Lstm, 2, 3, &vals), &x, &h0, &h0);
            for b in 0..2 {
                let g = lstm.gates.row(b);
                for k in 0..3 {
                    for sig in [g[k], g[3 + k], g[9 + k]] {
                        prop_assert!(sig > 0.0 && sig < 1.0);
                    }
                    prop_assert!(g[6 + k] > -1.0 && g[6 + k] < 1.0);
                }
            }
            let gru = gru_step(&random_params(CellKind::Gru, 2, 3, &vals), &x, &h0);
            for b in 0..2 {
                let g = gru.gates.row(b);
                for k in 0..3 {
                    prop_assert!(g[k] > 0.0 && g[k] < 1.0);
                    prop_assert!(g[3 + k] > 0.0 && g[3 + k] < 1.0);
                    prop_assert!(g[6 + k] > -1.0 && g[6 + k] < 1.0);
                }
            }
        }
    }
}
