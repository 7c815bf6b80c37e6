//! Stacked forward pass and backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cell::{gru_step, gru_step_backward, lstm_step, lstm_step_backward, GruStep, LstmStep};
use super::config::{CellKind, NetworkConfig};
use super::params::NetworkParams;
use crate::data::PaddedBatch;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Deterministic; dropout is the identity.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepCache {
    Lstm(LstmStep),
    Gru(GruStep),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    /// Layer input at each timestep (already passed through any dropout below).
    pub inputs: Vec<Matrix>,
    /// `hidden[t]` is the state entering step `t`; `hidden[0]` is zero.
    pub hidden: Vec<Matrix>,
    /// LSTM cell states, same indexing as `hidden`; empty for GRU.
    pub cells: Vec<Matrix>,
    pub steps: Vec<StepCache>,
    /// Inverted-dropout masks applied to this layer's output, values in
    /// `{0, 1/(1 − rate)}`.
    pub dropout: Option<Vec<Matrix>>,
}

/// Everything the backward pass needs from a forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    /// Input to the dense head at each timestep, `[batch × top_width]`.
    pub head_inputs: Vec<Matrix>,
    /// `[time × batch]` head outputs.
    pub predictions: Matrix,
}

impl ForwardCache {
    pub fn time_len(&self) -> usize {
        self.predictions.rows()
    }

    pub fn batch_size(&self) -> usize {
        self.predictions.cols()
    }
}

/// Samples an inverted-dropout mask. Each element is kept with probability
/// `1 − rate` and then scaled by `1/(1 − rate)`.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut impl Rng) -> Matrix {
    let scale = 1.0 / (1.0 - rate);
    Matrix::from_fn(rows, cols, |_, _| if rng.random::<f64>() >= rate { scale } else { 0.0 })
}

/// Runs the stack over every timestep of `batch` (padding included) and
/// applies the dense head at each step.
///
/// In [`Mode::Train`] one seed per dropout layer is drawn from `rng`, and each
/// layer's masks are sampled time-major from their own stream, so the masks
/// for a given timestep do not depend on how much padding follows it.
pub fn network_forward(
    params: &NetworkParams,
    config: &NetworkConfig,
    batch: &PaddedBatch,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Matrix, ForwardCache)> {
    params.check(config)?;
    if let Some(x) = batch.inputs.first() {
        if x.cols() != config.input_width {
            return Err(Error::invalid(format!(
                "batch has {} input features, network expects {}",
                x.cols(),
                config.input_width
            )));
        }
    }
    let time = batch.time_len();
    let bsz = batch.batch_size();
    if batch.inputs.iter().any(|x| x.rows() != bsz) {
        return Err(Error::invalid("batch input rows disagree with batch size"));
    }

    let mut site_rngs: Vec<Option<ChaCha8Rng>> = (0..config.num_layers())
        .map(|l| {
            (mode == Mode::Train && config.has_dropout_after(l))
                .then(|| ChaCha8Rng::seed_from_u64(rng.random::<u64>()))
        })
        .collect();

    let mut layers = Vec::with_capacity(config.num_layers());
    let mut current: Vec<Matrix> = batch.inputs.clone();
    for (l, p) in params.layers.iter().enumerate() {
        let hidden = config.layer_widths[l];
        let mut hs = Vec::with_capacity(time + 1);
        let mut cs = Vec::new();
        let mut steps = Vec::with_capacity(time);
        hs.push(Matrix::zeros(bsz, hidden));
        if config.cell == CellKind::Lstm {
            cs.push(Matrix::zeros(bsz, hidden));
        }
        for x in &current {
            let h_prev = hs.last().expect("initial state pushed");
            match config.cell {
                CellKind::Lstm => {
                    let step = lstm_step(p, x, h_prev, cs.last().expect("initial cell pushed"));
                    hs.push(step.h.clone());
                    cs.push(step.c.clone());
                    steps.push(StepCache::Lstm(step));
                }
                CellKind::Gru => {
                    let step = gru_step(p, x, h_prev);
                    hs.push(step.h.clone());
                    steps.push(StepCache::Gru(step));
                }
            }
        }

        let (outputs, dropout) = match site_rngs[l].as_mut() {
            Some(site) => {
                let masks: Vec<Matrix> =
                    (0..time).map(|_| dropout_mask(bsz, hidden, config.dropout_rate, site)).collect();
                let out = hs[1..].iter().zip(&masks).map(|(h, m)| h.hadamard(m)).collect();
                (out, Some(masks))
            }
            None => (hs[1..].to_vec(), None),
        };

        let inputs = std::mem::replace(&mut current, outputs);
        layers.push(LayerCache { inputs, hidden: hs, cells: cs, steps, dropout });
    }

    let mut predictions = Matrix::zeros(time, bsz);
    let w = params.head_w.row(0);
    for (t, top) in current.iter().enumerate() {
        for b in 0..bsz {
            let mut acc = params.head_b[0];
            for (hk, wk) in top.row(b).iter().zip(w) {
                acc += hk * wk;
            }
            predictions.set(t, b, config.head.apply(acc));
        }
    }

    let cache = ForwardCache { layers, head_inputs: current, predictions: predictions.clone() };
    Ok((predictions, cache))
}

/// Exact gradients of a loss whose derivative w.r.t. the predictions is
/// `d_pred`, restricted to cells where `mask` is non-zero.
///
/// Timesteps after the last masked-in step contribute nothing and are skipped.
pub fn network_backward(
    params: &NetworkParams,
    config: &NetworkConfig,
    cache: &ForwardCache,
    d_pred: &Matrix,
    mask: &Matrix,
) -> Result<NetworkParams> {
    params.check(config)?;
    let time = cache.time_len();
    let bsz = cache.batch_size();
    if cache.layers.len() != config.num_layers() || cache.head_inputs.len() != time {
        return Err(Error::invalid("forward cache does not match the network"));
    }
    let kind_matches = cache.layers.iter().flat_map(|l| l.steps.first()).all(|s| {
        matches!((s, config.cell), (StepCache::Lstm(_), CellKind::Lstm) | (StepCache::Gru(_), CellKind::Gru))
    });
    if !kind_matches || cache.layers.iter().any(|l| l.steps.len() != time) {
        return Err(Error::invalid("forward cache was produced by a different cell kind or batch"));
    }
    if d_pred.shape() != (time, bsz) || mask.shape() != (time, bsz) {
        return Err(Error::invalid(format!(
            "gradient {:?} / mask {:?} must both be [{time} × {bsz}]",
            d_pred.shape(),
            mask.shape()
        )));
    }

    let mut grads = params.zeros_like();
    let active = (0..time).rev().find(|&t| mask.row(t).iter().any(|&m| m != 0.0)).map_or(0, |t| t + 1);

    let top_width = config.top_width();
    let w = params.head_w.row(0).to_vec();
    let mut d_out: Vec<Matrix> = Vec::with_capacity(active);
    for t in 0..active {
        let mut dh = Matrix::zeros(bsz, top_width);
        for b in 0..bsz {
            let m = mask.get(t, b);
            if m == 0.0 {
                continue;
            }
            let y = cache.predictions.get(t, b);
            let da = d_pred.get(t, b) * m * config.head.derivative_from_output(y);
            grads.head_b[0] += da;
            let hb = cache.head_inputs[t].row(b);
            let gw = grads.head_w.row_mut(0);
            for k in 0..top_width {
                gw[k] += da * hb[k];
            }
            for (dst, wk) in dh.row_mut(b).iter_mut().zip(&w) {
                *dst = da * wk;
            }
        }
        d_out.push(dh);
    }

    for l in (0..config.num_layers()).rev() {
        let layer = &cache.layers[l];
        let p = &params.layers[l];
        let g = &mut grads.layers[l];
        let hidden = config.layer_widths[l];

        if let Some(masks) = &layer.dropout {
            for (d, m) in d_out.iter_mut().zip(masks) {
                *d = d.hadamard(m);
            }
        }

        let mut d_in = vec![Matrix::zeros(bsz, p.input()); active];
        let mut dh_next = Matrix::zeros(bsz, hidden);
        let mut dc_next = Matrix::zeros(bsz, hidden);
        for t in (0..active).rev() {
            let mut dh = d_out[t].clone();
            dh.add_assign(&dh_next);
            match &layer.steps[t] {
                StepCache::Lstm(step) => {
                    let (dx, dhp, dcp) = lstm_step_backward(
                        p,
                        g,
                        &layer.inputs[t],
                        &layer.hidden[t],
                        &layer.cells[t],
                        step,
                        &dh,
                        &dc_next,
                    );
                    d_in[t] = dx;
                    dh_next = dhp;
                    dc_next = dcp;
                }
                StepCache::Gru(step) => {
                    let (dx, dhp) = gru_step_backward(p, g, &layer.inputs[t], &layer.hidden[t], step, &dh);
                    d_in[t] = dx;
                    dh_next = dhp;
                }
            }
        }
        d_out = d_in;
    }
    Ok(grads)
}
