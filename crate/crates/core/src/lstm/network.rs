use serde::{Deserialize, Serialize};

use super::cell::{dot, LstmLayerParams};
use super::LstmError;
use crate::rng::SplitMix64;

/// Stacked LSTM with optional dropout after each layer and a linear head
/// applied at every time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub(crate) input_dim: usize,
    pub(crate) output_dim: usize,
    pub(crate) layers: Vec<LstmLayerParams>,
    /// `dropout_after[l]` inserts a dropout layer on the output of layer `l`.
    pub(crate) dropout_after: Vec<bool>,
    pub(crate) dropout_rate: f64,
    /// Row-major `output_dim × last_hidden`.
    pub(crate) dense_weights: Vec<f64>,
    pub(crate) dense_bias: Vec<f64>,
}

/// Gradients in the same block layout as [`LstmNetwork::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &LstmNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
            dense_weights: vec![0.0; net.dense_weights.len()],
            dense_bias: vec![0.0; net.dense_bias.len()],
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 2);
        for (w, b) in &self.layers {
            out.push(w);
            out.push(b);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 2);
        for (w, b) in &mut self.layers {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            for x in block {
                *x *= factor;
            }
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale so the global norm is at most `max_norm`. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

/// Activations of one layer over a whole sequence, stored time-major.
#[derive(Debug, Clone)]
struct LayerTape {
    /// `[h_{t-1}, x_t]` per step.
    z: Vec<f64>,
    /// Activated `(i, f, o, ĉ)` per step.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Dropout scale per output unit and step (`0` or `1/(1-p)`), if active.
    mask: Option<Vec<f64>>,
    /// Layer output after dropout; input of the next layer.
    out: Vec<f64>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: usize,
    layers: Vec<LayerTape>,
    outputs: Vec<Vec<f64>>,
}

impl Tape {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }
}

impl LstmNetwork {
    /// Build a randomly initialized network. `hidden_dims` and `dropout_after`
    /// must have equal length.
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        dropout_after: &[bool],
        dropout_rate: f64,
        output_dim: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self, LstmError> {
        if hidden_dims.is_empty() || hidden_dims.len() != dropout_after.len() {
            return Err(LstmError::InvalidArchitecture(format!(
                "{} hidden layers but {} dropout flags",
                hidden_dims.len(),
                dropout_after.len()
            )));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(LstmError::InvalidArchitecture(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        if input_dim == 0 || output_dim == 0 || hidden_dims.contains(&0) {
            return Err(LstmError::InvalidArchitecture("zero-width layer".into()));
        }
        let mut layers = Vec::with_capacity(hidden_dims.len());
        let mut width = input_dim;
        for &h in hidden_dims {
            layers.push(LstmLayerParams::random(width, h, rng));
            width = h;
        }
        let bound = 1.0 / (width as f64).sqrt();
        let dense_weights = (0..output_dim * width).map(|_| rng.uniform(-bound, bound)).collect();
        let dense_bias = (0..output_dim).map(|_| rng.uniform(-bound, bound)).collect();
        Ok(Self {
            input_dim,
            output_dim,
            layers,
            dropout_after: dropout_after.to_vec(),
            dropout_rate,
            dense_weights,
            dense_bias,
        })
    }

    /// A network with every weight and bias zero except the dense bias.
    pub fn zeros(input_dim: usize, hidden_dims: &[usize], output_dim: usize, dense_bias: Vec<f64>) -> Self {
        let mut layers = Vec::new();
        let mut width = input_dim;
        for &h in hidden_dims {
            layers.push(LstmLayerParams::zeros(width, h));
            width = h;
        }
        assert_eq!(dense_bias.len(), output_dim);
        Self {
            input_dim,
            output_dim,
            layers,
            dropout_after: vec![false; hidden_dims.len()],
            dropout_rate: 0.0,
            dense_weights: vec![0.0; output_dim * width],
            dense_bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden_dim).collect()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn layers(&self) -> &[LstmLayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LstmLayerParams] {
        &mut self.layers
    }

    pub fn dense_weights_mut(&mut self) -> &mut [f64] {
        &mut self.dense_weights
    }

    pub fn dense_bias_mut(&mut self) -> &mut [f64] {
        &mut self.dense_bias
    }

    /// Check shape chaining and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), LstmError> {
        let mut width = self.input_dim;
        if self.layers.is_empty() || self.dropout_after.len() != self.layers.len() {
            return Err(LstmError::InvalidArchitecture("layer/dropout count".into()));
        }
        for layer in &self.layers {
            if layer.input_dim != width {
                return Err(LstmError::DimensionMismatch {
                    expected: width,
                    found: layer.input_dim,
                });
            }
            layer.validate()?;
            width = layer.hidden_dim;
        }
        if self.dense_weights.len() != self.output_dim * width || self.dense_bias.len() != self.output_dim {
            return Err(LstmError::DimensionMismatch {
                expected: self.output_dim * width,
                found: self.dense_weights.len(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LstmError::InvalidArchitecture("dropout rate".into()));
        }
        if self.dense_weights.iter().chain(&self.dense_bias).any(|w| !w.is_finite()) {
            return Err(LstmError::NonFinite);
        }
        Ok(())
    }

    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out.push(&self.dense_weights);
        out.push(&self.dense_bias);
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.dense_weights);
        out.push(&mut self.dense_bias);
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    fn check_sequence(&self, sequence: &[Vec<f64>]) -> Result<(), LstmError> {
        if sequence.is_empty() {
            return Err(LstmError::EmptySequence);
        }
        if let Some(bad) = sequence.iter().find(|x| x.len() != self.input_dim) {
            return Err(LstmError::DimensionMismatch {
                expected: self.input_dim,
                found: bad.len(),
            });
        }
        Ok(())
    }

    /// Run the network over `sequence`, one output per step.
    ///
    /// With `dropout = None` the pass is deterministic inference; with a
    /// generator, dropout masks are sampled (inverted scaling) and stored in
    /// the tape.
    pub fn forward(
        &self,
        sequence: &[Vec<f64>],
        mut dropout: Option<&mut SplitMix64>,
    ) -> Result<(Vec<Vec<f64>>, Tape), LstmError> {
        self.check_sequence(sequence)?;
        let steps = sequence.len();
        let mut below: Vec<f64> = sequence.iter().flatten().copied().collect();
        let mut width = self.input_dim;
        let mut tapes = Vec::with_capacity(self.layers.len());
        let keep = 1.0 - self.dropout_rate;
        for (l, layer) in self.layers.iter().enumerate() {
            let hd = layer.hidden_dim;
            let cols = layer.row_len();
            let mut tape = LayerTape {
                z: vec![0.0; steps * cols],
                gates: vec![0.0; steps * 4 * hd],
                c: vec![0.0; steps * hd],
                tanh_c: vec![0.0; steps * hd],
                mask: None,
                out: vec![0.0; steps * hd],
            };
            let zeros = vec![0.0; hd];
            let mut h_t = vec![0.0; hd];
            for t in 0..steps {
                let z = &mut tape.z[t * cols..(t + 1) * cols];
                if t > 0 {
                    z[..hd].copy_from_slice(&h_t);
                }
                z[hd..].copy_from_slice(&below[t * width..(t + 1) * width]);
                let (c_done, c_rest) = tape.c.split_at_mut(t * hd);
                let c_prev = if t > 0 { &c_done[(t - 1) * hd..] } else { &zeros[..] };
                layer.step(
                    &tape.z[t * cols..(t + 1) * cols],
                    c_prev,
                    &mut tape.gates[t * 4 * hd..(t + 1) * 4 * hd],
                    &mut c_rest[..hd],
                    &mut h_t,
                );
                for k in 0..hd {
                    tape.tanh_c[t * hd + k] = tape.c[t * hd + k].tanh();
                }
                tape.out[t * hd..(t + 1) * hd].copy_from_slice(&h_t);
            }
            if let (true, Some(rng)) = (self.dropout_after[l] && self.dropout_rate > 0.0, dropout.as_deref_mut()) {
                let mask: Vec<f64> = (0..steps * hd)
                    .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                for (o, m) in tape.out.iter_mut().zip(&mask) {
                    *o *= m;
                }
                tape.mask = Some(mask);
            }
            below = tape.out.clone();
            width = hd;
            tapes.push(tape);
        }
        let outputs: Vec<Vec<f64>> = (0..steps)
            .map(|t| self.dense(&below[t * width..(t + 1) * width]))
            .collect();
        Ok((
            outputs.clone(),
            Tape {
                steps,
                layers: tapes,
                outputs,
            },
        ))
    }

    fn dense(&self, h: &[f64]) -> Vec<f64> {
        self.dense_weights
            .chunks_exact(h.len())
            .zip(&self.dense_bias)
            .map(|(row, b)| b + dot(row, h))
            .collect()
    }

    /// Inference-only output for the final step of `sequence`, without
    /// recording a tape.
    pub fn predict_last(&self, sequence: &[Vec<f64>]) -> Result<Vec<f64>, LstmError> {
        self.check_sequence(sequence)?;
        let steps = sequence.len();
        let mut below: Vec<f64> = sequence.iter().flatten().copied().collect();
        let mut width = self.input_dim;
        for layer in &self.layers {
            let hd = layer.hidden_dim;
            let mut z = vec![0.0; layer.row_len()];
            let mut gates = vec![0.0; 4 * hd];
            let mut c_prev = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            let mut h = vec![0.0; hd];
            let mut out = vec![0.0; steps * hd];
            for t in 0..steps {
                z[..hd].copy_from_slice(&h);
                z[hd..].copy_from_slice(&below[t * width..(t + 1) * width]);
                layer.step(&z, &c_prev, &mut gates, &mut c, &mut h);
                std::mem::swap(&mut c_prev, &mut c);
                out[t * hd..(t + 1) * hd].copy_from_slice(&h);
            }
            below = out;
            width = hd;
        }
        Ok(self.dense(&below[(steps - 1) * width..]))
    }

    /// Squared error summed over output channels and averaged over the
    /// supervised steps. `targets` align with the last `targets.len()`
    /// outputs, so a shorter target list leaves the early steps unsupervised.
    pub fn loss(outputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let steps = targets.len() as f64;
        outputs[outputs.len() - targets.len()..]
            .iter()
            .zip(targets)
            .map(|(o, t)| o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / steps
    }

    /// Exact gradient of [`LstmNetwork::loss`] with respect to every
    /// parameter, by backpropagation through time over the taped pass.
    pub fn backward(&self, tape: &Tape, targets: &[Vec<f64>]) -> Result<Gradients, LstmError> {
        if targets.is_empty() || targets.len() > tape.steps || tape.layers.len() != self.layers.len() {
            return Err(LstmError::TapeMismatch);
        }
        if let Some(bad) = targets.iter().find(|t| t.len() != self.output_dim) {
            return Err(LstmError::DimensionMismatch {
                expected: self.output_dim,
                found: bad.len(),
            });
        }
        let steps = tape.steps;
        let mut grads = Gradients::zeros_like(self);
        let top = self.layers.last().expect("validated non-empty").hidden_dim;
        let top_out = &tape.layers.last().expect("validated non-empty").out;

        // Dense head.
        let mut d_out = vec![0.0; steps * top];
        let scale = 2.0 / targets.len() as f64;
        let first = steps - targets.len();
        for t in first..steps {
            let h = &top_out[t * top..(t + 1) * top];
            let dh = &mut d_out[t * top..(t + 1) * top];
            for o in 0..self.output_dim {
                let dy = scale * (tape.outputs[t][o] - targets[t - first][o]);
                grads.dense_bias[o] += dy;
                let row = &self.dense_weights[o * top..(o + 1) * top];
                let grow = &mut grads.dense_weights[o * top..(o + 1) * top];
                for k in 0..top {
                    grow[k] += dy * h[k];
                    dh[k] += dy * row[k];
                }
            }
        }

        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let lt = &tape.layers[l];
            let hd = layer.hidden_dim;
            let cols = layer.row_len();
            let in_w = layer.input_dim;
            if let Some(mask) = &lt.mask {
                for (d, m) in d_out.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            let (gw, gb) = &mut grads.layers[l];
            let mut d_below = vec![0.0; steps * in_w];
            let mut dh_next = vec![0.0; hd];
            let mut dc_next = vec![0.0; hd];
            let mut da = vec![0.0; 4 * hd];
            let mut dz = vec![0.0; cols];
            for t in (0..steps).rev() {
                let gates = &lt.gates[t * 4 * hd..(t + 1) * 4 * hd];
                let tanh_c = &lt.tanh_c[t * hd..(t + 1) * hd];
                for k in 0..hd {
                    let (i, f, o, g) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
                    let c_prev = if t > 0 { lt.c[(t - 1) * hd + k] } else { 0.0 };
                    let dh = d_out[t * hd + k] + dh_next[k];
                    let tc = tanh_c[k];
                    let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                    da[k] = dc * g * i * (1.0 - i);
                    da[hd + k] = dc * c_prev * f * (1.0 - f);
                    da[2 * hd + k] = dh * tc * o * (1.0 - o);
                    da[3 * hd + k] = dc * i * (1.0 - g * g);
                    dc_next[k] = dc * f;
                }
                let z = &lt.z[t * cols..(t + 1) * cols];
                dz.iter_mut().for_each(|v| *v = 0.0);
                for (r, &d) in da.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    let row = &layer.weights[r * cols..(r + 1) * cols];
                    let grow = &mut gw[r * cols..(r + 1) * cols];
                    for j in 0..cols {
                        grow[j] += d * z[j];
                        dz[j] += d * row[j];
                    }
                }
                dh_next.copy_from_slice(&dz[..hd]);
                d_below[t * in_w..(t + 1) * in_w].copy_from_slice(&dz[hd..]);
            }
            d_out = d_below;
        }
        Ok(grads)
    }
}
