use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{CellKind, NetworkConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// LSTM gate blocks, in row order of the stacked weight matrices.
pub const LSTM_GATES: [&str; 4] = ["input", "forget", "candidate", "output"];
/// GRU gate blocks, in row order of the stacked weight matrices.
pub const GRU_GATES: [&str; 3] = ["update", "reset", "candidate"];

/// Weights of one recurrent layer with the gate blocks stacked along rows:
/// `w` is `[gates·hidden × in]`, `u` is `[gates·hidden × hidden]`, `b` is
/// `[gates·hidden]`. Block `g` occupies rows `g·hidden .. (g+1)·hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn zeros(kind: CellKind, input: usize, hidden: usize) -> Self {
        let rows = kind.gates() * hidden;
        CellParams { w: Matrix::zeros(rows, input), u: Matrix::zeros(rows, hidden), b: vec![0.0; rows] }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input(&self) -> usize {
        self.w.cols()
    }

    pub fn zeros_like(&self) -> Self {
        CellParams { w: self.w.zeros_like(), u: self.u.zeros_like(), b: vec![0.0; self.b.len()] }
    }

    pub(crate) fn check(&self, kind: CellKind) -> Result<()> {
        let h = self.hidden();
        let rows = kind.gates() * h;
        if self.w.rows() != rows || self.u.shape() != (rows, h) || self.b.len() != rows {
            return Err(Error::invalid(format!(
                "{kind} parameters have inconsistent shapes: w {:?}, u {:?}, b {}",
                self.w.shape(),
                self.u.shape(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

pub type LstmCellParams = CellParams;
pub type GruCellParams = CellParams;

/// All trainable values of the stacked network plus its dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub cell: CellKind,
    pub layers: Vec<CellParams>,
    /// `[1 × top_width]`.
    pub head_w: Matrix,
    /// `[1]`.
    pub head_b: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(config: &NetworkConfig) -> Self {
        let layers = (0..config.num_layers())
            .map(|l| CellParams::zeros(config.cell, config.layer_input_width(l), config.layer_widths[l]))
            .collect();
        NetworkParams {
            cell: config.cell,
            layers,
            head_w: Matrix::zeros(1, config.top_width()),
            head_b: vec![0.0],
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            cell: self.cell,
            layers: self.layers.iter().map(CellParams::zeros_like).collect(),
            head_w: self.head_w.zeros_like(),
            head_b: vec![0.0; self.head_b.len()],
        }
    }

    /// Named flat views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for (l, p) in self.layers.iter().enumerate() {
            out.push((format!("layers[{l}].w"), p.w.as_slice()));
            out.push((format!("layers[{l}].u"), p.u.as_slice()));
            out.push((format!("layers[{l}].b"), p.b.as_slice()));
        }
        out.push(("head.w".to_string(), self.head_w.as_slice()));
        out.push(("head.b".to_string(), self.head_b.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for (l, p) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers[{l}].w"), p.w.as_mut_slice()));
            out.push((format!("layers[{l}].u"), p.u.as_mut_slice()));
            out.push((format!("layers[{l}].b"), p.b.as_mut_slice()));
        }
        out.push(("head.w".to_string(), self.head_w.as_mut_slice()));
        out.push(("head.b".to_string(), self.head_b.as_mut_slice()));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    /// Mutable access to scalar `index` of [`NetworkParams::to_flat`].
    pub fn scalar_mut(&mut self, mut index: usize) -> &mut f64 {
        for (_, t) in self.tensors_mut() {
            if index < t.len() {
                return &mut t[index];
            }
            index -= t.len();
        }
        panic!("scalar index out of range");
    }

    /// Tensor name and offset of scalar `index`, e.g. `layers[1].u[7]`.
    pub fn scalar_path(&self, mut index: usize) -> String {
        for (name, t) in self.tensors() {
            if index < t.len() {
                return format!("{name}[{index}]");
            }
            index -= t.len();
        }
        format!("<out of range {index}>")
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Checks that the parameter shapes agree with `config`.
    pub fn check(&self, config: &NetworkConfig) -> Result<()> {
        config.validate()?;
        if self.cell != config.cell {
            return Err(Error::invalid(format!("parameters are {} but config says {}", self.cell, config.cell)));
        }
        if self.layers.len() != config.num_layers() {
            return Err(Error::invalid(format!(
                "parameters have {} layers but config has {}",
                self.layers.len(),
                config.num_layers()
            )));
        }
        for (l, p) in self.layers.iter().enumerate() {
            p.check(self.cell)?;
            if p.input() != config.layer_input_width(l) || p.hidden() != config.layer_widths[l] {
                return Err(Error::invalid(format!(
                    "layer {l} is {}→{} but config expects {}→{}",
                    p.input(),
                    p.hidden(),
                    config.layer_input_width(l),
                    config.layer_widths[l]
                )));
            }
        }
        if self.head_w.shape() != (1, config.top_width()) || self.head_b.len() != 1 {
            return Err(Error::invalid("dense head shape does not match config"));
        }
        Ok(())
    }
}

/// Glorot-uniform input and head weights, orthogonal recurrent blocks, zero
/// biases except the LSTM forget gate (1.0).
pub fn init_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(config);
    let gates = config.cell.gates();

    for (l, layer) in params.layers.iter_mut().enumerate() {
        let fan_in = config.layer_input_width(l);
        let hidden = config.layer_widths[l];
        let limit = (6.0 / (fan_in + hidden) as f64).sqrt();
        for x in layer.w.as_mut_slice() {
            *x = rng.random_range(-limit..=limit);
        }
        for g in 0..gates {
            let q = orthogonal(hidden, &mut rng);
            for r in 0..hidden {
                layer.u.row_mut(g * hidden + r).copy_from_slice(q.row(r));
            }
        }
        if config.cell == CellKind::Lstm {
            for b in &mut layer.b[hidden..2 * hidden] {
                *b = 1.0;
            }
        }
    }

    let top = config.top_width();
    let limit = (6.0 / (top + 1) as f64).sqrt();
    for x in params.head_w.as_mut_slice() {
        *x = rng.random_range(-limit..=limit);
    }
    Ok(params)
}

/// Random `n × n` orthogonal matrix: Gram–Schmidt on Gaussian rows.
fn orthogonal(n: usize, rng: &mut impl Rng) -> Matrix {
    let mut q = Matrix::zeros(n, n);
    let mut r = 0;
    while r < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for prev in 0..r {
            let dot: f64 = v.iter().zip(q.row(prev)).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q.row(prev)) {
                *vi -= dot * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        for (dst, x) in q.row_mut(r).iter_mut().zip(&v) {
            *dst = x / norm;
        }
        r += 1;
    }
    q
}
