//! Linear and ridge autoregressive predictors over the same one-step windows
//! as the LSTM, used as price-only comparators.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::RollingWindowSet;
use crate::linalg::{has_full_column_rank, ridge_normal_equations, FALLBACK_RIDGE};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("{found} training pairs, at least {required} required")]
    InsufficientData { found: usize, required: usize },
    #[error("ridge_lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("lag matrix is rank deficient; ordinary least squares is undefined")]
    RankDeficient,
    #[error("window has {found} values, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// `ŷ = w·x + b` over the previous `weights.len()` values, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAutoregressor {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub ridge_lambda: f64,
}

impl LinearAutoregressor {
    pub fn lags(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_one(&self, inputs: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(inputs).map(|(w, x)| w * x).sum::<f64>()
    }

    /// `Σ(target − w·x − b)² + λ‖w‖²` over the training pairs.
    pub fn objective(&self, windows: &RollingWindowSet<f64>) -> f64 {
        let sse: f64 = windows
            .windows
            .iter()
            .map(|p| (p.target - self.predict_one(&p.input)).powi(2))
            .sum();
        sse + self.ridge_lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Fit by least squares with an unpenalized bias. The bias is removed by
/// centering, so the ridge penalty touches only the lag weights.
///
/// `ridge_lambda = 0` is ordinary least squares and fails with
/// [`BaselineError::RankDeficient`] on collinear lags.
pub fn fit_autoregressor(
    windows: &RollingWindowSet<f64>,
    ridge_lambda: f64,
) -> Result<LinearAutoregressor, BaselineError> {
    if !(ridge_lambda >= 0.0) || !ridge_lambda.is_finite() {
        return Err(BaselineError::InvalidLambda(ridge_lambda));
    }
    let pairs = &windows.windows;
    let lags = pairs.first().map_or(0, |p| p.input.len());
    let required = lags.max(1) + 1;
    if pairs.len() < required.max(windows.window_length) {
        return Err(BaselineError::InsufficientData {
            found: pairs.len(),
            required: required.max(windows.window_length),
        });
    }
    let n = pairs.len();
    let x_mean: Vec<f64> = (0..lags)
        .map(|j| pairs.iter().map(|p| p.input[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = pairs.iter().map(|p| p.target).sum::<f64>() / n as f64;
    let x = DMatrix::from_fn(n, lags, |i, j| pairs[i].input[j] - x_mean[j]);
    let y = DVector::from_iterator(n, pairs.iter().map(|p| p.target - y_mean));
    let weights = if ridge_lambda == 0.0 {
        if !has_full_column_rank(&x) {
            return Err(BaselineError::RankDeficient);
        }
        let qr = x.qr();
        let qty = qr.q().transpose() * &y;
        qr.r()
            .solve_upper_triangular(&qty)
            .ok_or(BaselineError::RankDeficient)?
            .iter()
            .copied()
            .collect()
    } else {
        ridge_normal_equations(&x, &y, ridge_lambda, &vec![true; lags])
    };
    let bias = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearAutoregressor {
        weights,
        bias,
        ridge_lambda,
    })
}

/// Ordinary least squares, retrying with the small fallback ridge when the
/// lags are collinear. The returned model records the λ actually used.
pub fn fit_linear_or_fallback(windows: &RollingWindowSet<f64>) -> Result<LinearAutoregressor, BaselineError> {
    match fit_autoregressor(windows, 0.0) {
        Err(BaselineError::RankDeficient) => {
            log::warn!("RankDeficient: linear baseline lags are collinear; using ridge {FALLBACK_RIDGE:e}");
            fit_autoregressor(windows, FALLBACK_RIDGE)
        }
        other => other,
    }
}

/// Recursive prediction with the same contract as the LSTM's.
pub fn predict_full_sequence_baseline(
    window: &[f64],
    model: &LinearAutoregressor,
    horizon: usize,
) -> Result<Vec<f64>, BaselineError> {
    let lags = model.lags();
    if window.len() != lags {
        return Err(BaselineError::DimensionMismatch {
            expected: lags,
            found: window.len(),
        });
    }
    let mut buffer = window.to_vec();
    for k in 0..horizon {
        let next = model.predict_one(&buffer[k..k + lags]);
        buffer.push(next);
    }
    Ok(buffer.split_off(lags))
}
