use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::network::{Gradients, LstmNetwork};
use super::LstmError;
use crate::data::{RollingWindowSet, TrainingPair};
use crate::rng::SplitMix64;

/// Network shape and optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout_after: Vec<bool>,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Per-epoch multiplier applied to the learning rate; 1.0 keeps it fixed.
    pub learning_rate_decay: f64,
    /// Windows per Adam step; `None` uses the whole window set.
    pub batch_size: Option<usize>,
    pub clip_norm: f64,
    /// Trailing steps of each window that receive a loss term; `None`
    /// supervises every step.
    pub supervised_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            // LSTM(64) → dropout → LSTM(64) → LSTM(32) → dropout → dense
            hidden_dims: vec![64, 64, 32],
            dropout_after: vec![true, false, true],
            dropout_rate: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            learning_rate_decay: 1.0,
            batch_size: Some(32),
            clip_norm: 5.0,
            supervised_steps: Some(30),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        if self.hidden_dims.is_empty() || self.hidden_dims.len() != self.dropout_after.len() {
            return Err(LstmError::InvalidArchitecture(
                "hidden_dims and dropout_after must be non-empty and equally long".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LstmError::InvalidArchitecture("dropout_rate outside [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 || self.batch_size == Some(0) {
            return Err(LstmError::InvalidArchitecture(
                "learning_rate, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return Err(LstmError::InvalidArchitecture("learning_rate_decay outside (0, 1]".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(LstmError::InvalidArchitecture("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Inference-mode loss over all windows before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss (with dropout) of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Inference-mode loss over all windows after the last update.
    pub final_loss: f64,
}

/// Per-step targets of a pair, keeping only the trailing `supervised` of
/// them.
fn sequence_targets(pair: &TrainingPair<Vec<f64>>, supervised: Option<usize>) -> Vec<Vec<f64>> {
    let mut targets: Vec<Vec<f64>> = pair.input[1..].to_vec();
    targets.push(pair.target.clone());
    let keep = supervised.unwrap_or(targets.len()).clamp(1, targets.len());
    targets.split_off(targets.len() - keep)
}

pub fn dataset_loss(
    net: &LstmNetwork,
    windows: &[TrainingPair<Vec<f64>>],
    supervised: Option<usize>,
) -> Result<f64, LstmError> {
    let mut total = 0.0;
    for pair in windows {
        let (out, _) = net.forward(&pair.input, None)?;
        total += LstmNetwork::loss(&out, &sequence_targets(pair, supervised));
    }
    Ok(total / windows.len() as f64)
}

/// Train a fresh network on one-step windows of feature vectors.
///
/// The output at step `t` of a window is trained toward the input at
/// `t + 1`, and the last step toward the window target; only the trailing
/// `supervised_steps` of these terms enter the loss. Minibatches are drawn from a seeded shuffle, so
/// two runs with the same config produce bit-identical parameters.
pub fn train(
    windows: &RollingWindowSet<Vec<f64>>,
    config: &TrainConfig,
) -> Result<(LstmNetwork, TrainHistory), LstmError> {
    config.validate()?;
    let pairs = &windows.windows;
    let first = pairs.first().ok_or(LstmError::NoWindows)?;
    let dim = first.input.first().ok_or(LstmError::EmptySequence)?.len();
    let mut rng = SplitMix64::new(config.seed);
    let mut init_rng = rng.split(0);
    let mut order_rng = rng.split(1);
    let mut dropout_rng = rng.split(2);
    let mut net = LstmNetwork::new(
        dim,
        &config.hidden_dims,
        &config.dropout_after,
        config.dropout_rate,
        dim,
        &mut init_rng,
    )?;
    let shapes: Vec<usize> = net.param_blocks().iter().map(|b| b.len()).collect();
    let mut adam = AdamState::new(&shapes, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let initial_loss = dataset_loss(&net, pairs, config.supervised_steps)?;
    let batch = config.batch_size.unwrap_or(pairs.len()).min(pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut order_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = Gradients::zeros_like(&net);
            for &idx in chunk {
                let pair = &pairs[idx];
                let targets = sequence_targets(pair, config.supervised_steps);
                let (out, tape) = net.forward(&pair.input, Some(&mut dropout_rng))?;
                epoch_loss += LstmNetwork::loss(&out, &targets);
                grads.add_assign(&net.backward(&tape, &targets)?);
            }
            grads.scale(1.0 / chunk.len() as f64);
            grads.clip_global_norm(config.clip_norm);
            let blocks = grads.blocks();
            adam_step(&mut net.param_blocks_mut(), &blocks, &mut adam);
        }
        epoch_loss /= pairs.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(LstmError::NonFinite);
        }
        log::debug!("epoch {} loss {:.6e}", epoch + 1, epoch_loss);
        epoch_losses.push(epoch_loss);
        adam.learning_rate *= config.learning_rate_decay;
    }
    let final_loss = dataset_loss(&net, pairs, config.supervised_steps)?;
    Ok((
        net,
        TrainHistory {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    ))
}

fn shuffle(order: &mut [usize], rng: &mut SplitMix64) {
    for i in (1..order.len()).rev() {
        let j = (rng.next_f64() * (i + 1) as f64) as usize;
        order.swap(i, j.min(i));
    }
}

/// Recursive multi-step prediction.
///
/// Starting from the real `window`, each step predicts the next feature
/// vector, drops the oldest input and appends the prediction. After
/// `window.len()` steps the input consists only of earlier predictions.
pub fn predict_full_sequence(
    window: &[Vec<f64>],
    net: &LstmNetwork,
    horizon: usize,
) -> Result<Vec<Vec<f64>>, LstmError> {
    if net.input_dim() != net.output_dim() {
        return Err(LstmError::DimensionMismatch {
            expected: net.input_dim(),
            found: net.output_dim(),
        });
    }
    if window.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    let len = window.len();
    let mut buffer: Vec<Vec<f64>> = window.to_vec();
    let mut predictions = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let next = net.predict_last(&buffer[k..k + len])?;
        buffer.push(next.clone());
        predictions.push(next);
    }
    Ok(predictions)
}
