use serde::{Deserialize, Serialize};

use super::LstmError;
use crate::rng::SplitMix64;

/// Gate blocks in the stacked weight matrix, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Candidate = 3,
}

/// Parameters of one LSTM layer.
///
/// The four gate matrices are stacked into one `4·hidden × (hidden + input)`
/// row-major matrix in [`Gate`] order. Columns multiply the concatenation
/// `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerParams {
    pub(crate) input_dim: usize,
    pub(crate) hidden_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            weights: vec![0.0; 4 * hidden_dim * (hidden_dim + input_dim)],
            bias: vec![0.0; 4 * hidden_dim],
        }
    }

    /// Uniform initialization in `±1/sqrt(hidden + input)`.
    pub fn random(input_dim: usize, hidden_dim: usize, rng: &mut SplitMix64) -> Self {
        let mut layer = Self::zeros(input_dim, hidden_dim);
        let bound = 1.0 / ((hidden_dim + input_dim) as f64).sqrt();
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.uniform(-bound, bound);
        }
        // Start the forget gate open so early gradients reach distant steps.
        layer.gate_bias_mut(Gate::Forget).iter_mut().for_each(|b| *b += 1.0);
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub(crate) fn row_len(&self) -> usize {
        self.hidden_dim + self.input_dim
    }

    pub fn gate_weights(&self, gate: Gate) -> &[f64] {
        let block = self.hidden_dim * self.row_len();
        let g = gate as usize;
        &self.weights[g * block..(g + 1) * block]
    }

    pub fn gate_weights_mut(&mut self, gate: Gate) -> &mut [f64] {
        let block = self.hidden_dim * self.row_len();
        let g = gate as usize;
        &mut self.weights[g * block..(g + 1) * block]
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let g = gate as usize;
        &self.bias[g * self.hidden_dim..(g + 1) * self.hidden_dim]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let g = gate as usize;
        let h = self.hidden_dim;
        &mut self.bias[g * h..(g + 1) * h]
    }

    pub(crate) fn validate(&self) -> Result<(), LstmError> {
        let expected_w = 4 * self.hidden_dim * self.row_len();
        if self.weights.len() != expected_w || self.bias.len() != 4 * self.hidden_dim {
            return Err(LstmError::DimensionMismatch {
                expected: expected_w,
                found: self.weights.len(),
            });
        }
        if self.weights.iter().chain(&self.bias).any(|w| !w.is_finite()) {
            return Err(LstmError::NonFinite);
        }
        Ok(())
    }

    /// Gate pre-activations `W·z + b` for the stacked matrix into `out`.
    #[inline]
    pub(crate) fn affine(&self, z: &[f64], out: &mut [f64]) {
        let cols = self.row_len();
        for (r, (o, row)) in out.iter_mut().zip(self.weights.chunks_exact(cols)).enumerate() {
            *o = self.bias[r] + dot(row, z);
        }
    }

    /// One time step. `z` holds `[h_prev, x]`; `gates` receives the activated
    /// `(i, f, o, ĉ)` blocks, and `c`/`h` the new cell and hidden states.
    #[inline]
    pub(crate) fn step(&self, z: &[f64], c_prev: &[f64], gates: &mut [f64], c: &mut [f64], h: &mut [f64]) {
        let hd = self.hidden_dim;
        self.affine(z, gates);
        for v in &mut gates[..3 * hd] {
            *v = sigmoid(*v);
        }
        for v in &mut gates[3 * hd..] {
            *v = v.tanh();
        }
        for k in 0..hd {
            let (i, f, o, g) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            c[k] = f * c_prev[k] + i * g;
            h[k] = o * c[k].tanh();
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let j = 4 * k;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate activations of one step, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub candidate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub gates: Option<GateRecord>,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
            c: vec![0.0; hidden_dim],
            gates: None,
        }
    }
}

/// Advance one LSTM cell by one input.
pub fn cell_forward(x: &[f64], prev: &CellState, params: &LstmLayerParams) -> Result<CellState, LstmError> {
    let hd = params.hidden_dim;
    if x.len() != params.input_dim {
        return Err(LstmError::DimensionMismatch {
            expected: params.input_dim,
            found: x.len(),
        });
    }
    if prev.h.len() != hd || prev.c.len() != hd {
        return Err(LstmError::DimensionMismatch {
            expected: hd,
            found: prev.h.len(),
        });
    }
    let mut z = Vec::with_capacity(params.row_len());
    z.extend_from_slice(&prev.h);
    z.extend_from_slice(x);
    let mut gates = vec![0.0; 4 * hd];
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    params.step(&z, &prev.c, &mut gates, &mut c, &mut h);
    let record = GateRecord {
        input: gates[..hd].to_vec(),
        forget: gates[hd..2 * hd].to_vec(),
        output: gates[2 * hd..3 * hd].to_vec(),
        candidate: gates[3 * hd..].to_vec(),
    };
    Ok(CellState {
        h,
        c,
        gates: Some(record),
    })
}
