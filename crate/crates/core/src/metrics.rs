//! Prediction accuracy, trend accuracy and return measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("panel shape mismatch: {0}")]
    Shape(String),
}

/// Real and predicted prices laid out as consecutive windows of
/// `window_length` days, `[day][stock]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPanel {
    pub real: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub window_length: usize,
}

impl PredictionPanel {
    pub fn new(real: Vec<Vec<f64>>, predicted: Vec<Vec<f64>>, window_length: usize) -> Result<Self, MetricsError> {
        let shape = |m: String| Err(MetricsError::Shape(m));
        if window_length < 2 || real.is_empty() || real.len() % window_length != 0 {
            return shape(format!("{} days is not a positive multiple of window length {window_length}", real.len()));
        }
        if real.len() != predicted.len() {
            return shape(format!("{} real days vs {} predicted", real.len(), predicted.len()));
        }
        let stocks = real[0].len();
        if stocks == 0 || real.iter().chain(&predicted).any(|row| row.len() != stocks) {
            return shape("rows must share a non-zero stock count".into());
        }
        for (day, row) in real.iter().enumerate() {
            if let Some(&value) = row.iter().find(|&&v| !(v > 0.0)) {
                return Err(MetricsError::NonPositivePrice { index: day, value });
            }
        }
        Ok(Self {
            real,
            predicted,
            window_length,
        })
    }

    pub fn n_days(&self) -> usize {
        self.real.len()
    }

    pub fn n_stocks(&self) -> usize {
        self.real[0].len()
    }

    pub fn n_windows(&self) -> usize {
        self.real.len() / self.window_length
    }

    /// First day of each window.
    pub fn window_boundaries(&self) -> Vec<usize> {
        (0..self.n_windows()).map(|w| w * self.window_length).collect()
    }

    /// Second half of every window (days 30..60 for 60-day windows).
    pub fn midterm_mask(&self) -> Vec<usize> {
        let half = self.window_length / 2;
        self.window_boundaries()
            .into_iter()
            .flat_map(|start| start + half..start + self.window_length)
            .collect()
    }
}

/// `1 − mean_ℓ |X − X̂| / X` over the stocks on `day`.
pub fn mpa(panel: &PredictionPanel, day: usize) -> f64 {
    let real = &panel.real[day];
    let pred = &panel.predicted[day];
    let err: f64 = real.iter().zip(pred).map(|(x, p)| (x - p).abs() / x).sum();
    1.0 - err / real.len() as f64
}

/// MPA for every day of the panel.
pub fn mpa_series(panel: &PredictionPanel) -> Vec<f64> {
    (0..panel.n_days()).map(|d| mpa(panel, d)).collect()
}

/// Mean MPA over the midterm days of all windows, weighting days equally.
pub fn midterm_mean_mpa(panel: &PredictionPanel) -> f64 {
    let mask = panel.midterm_mask();
    mask.iter().map(|&d| mpa(panel, d)).sum::<f64>() / mask.len() as f64
}

/// Direction agreement between the first and last day of a window. Both
/// comparisons are inclusive, so a flat series agrees with any prediction.
pub fn trend_flag(real_first: f64, real_last: f64, pred_first: f64, pred_last: f64) -> bool {
    (pred_last >= pred_first && real_last >= real_first) || (pred_last <= pred_first && real_last <= real_first)
}

/// Per-window mean of the stock trend flags, averaged over windows.
pub fn trend_accuracy(panel: &PredictionPanel) -> f64 {
    trend_accuracy_for(panel, &(0..panel.n_stocks()).collect::<Vec<_>>())
}

/// [`trend_accuracy`] restricted to a subset of stock columns.
pub fn trend_accuracy_for(panel: &PredictionPanel, stocks: &[usize]) -> f64 {
    let w = panel.window_length;
    let per_window: Vec<f64> = panel
        .window_boundaries()
        .into_iter()
        .map(|start| {
            let end = start + w - 1;
            let hits = stocks
                .iter()
                .filter(|&&s| {
                    trend_flag(
                        panel.real[start][s],
                        panel.real[end][s],
                        panel.predicted[start][s],
                        panel.predicted[end][s],
                    )
                })
                .count();
            hits as f64 / stocks.len() as f64
        })
        .collect();
    per_window.iter().sum::<f64>() / per_window.len() as f64
}

fn check_positive(prices: &[f64]) -> Result<(), MetricsError> {
    match prices.iter().position(|&p| !(p > 0.0)) {
        Some(index) => Err(MetricsError::NonPositivePrice {
            index,
            value: prices[index],
        }),
        None => Ok(()),
    }
}

/// `ln(X_{t+1} / X_t)` for consecutive prices.
pub fn log_returns(prices: &[f64]) -> Result<Vec<f64>, MetricsError> {
    check_positive(prices)?;
    Ok(prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    /// `Π (1 + ln(X_{t+1}/X_t))`, the literal product of one plus log returns.
    #[default]
    Log,
    /// `Π X_{t+1}/X_t`, i.e. last over first.
    Simple,
}

pub fn cumulative_return(prices: &[f64], kind: ReturnKind) -> Result<f64, MetricsError> {
    check_positive(prices)?;
    Ok(match kind {
        ReturnKind::Log => prices.windows(2).map(|w| 1.0 + (w[1] / w[0]).ln()).product(),
        ReturnKind::Simple => prices.windows(2).map(|w| w[1] / w[0]).product(),
    })
}
