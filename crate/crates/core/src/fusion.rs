//! Linear fusion of the LSTM's predicted price with the predicted market
//! index and the decoded hidden state:
//!
//! `X̂_t = α·X_t + λ·ρ·M_t + η·ρ + γ·S_t + c`
//!
//! where `ρ` is the correlation of the predicted price and market paths over
//! the window. Everything here is in normalized price units.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::{viterbi, GaussianHmm, HmmError};
use crate::linalg::{design, least_squares};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("degenerate vector: {0}")]
    DegenerateVector(&'static str),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("{rows} rows cannot determine {coefficients} coefficients")]
    TooFewRows { rows: usize, coefficients: usize },
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// How the decoded state enters the regression.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateEncoding {
    /// The raw state index times a single `γ`.
    #[default]
    Index,
    /// One indicator column per state. The intercept is dropped so the
    /// design stays identifiable; `c` is reported as zero.
    OneHot,
}

fn check_lengths(x: &[f64], m: &[f64]) -> Result<(), FusionError> {
    if x.len() != m.len() {
        return Err(FusionError::LengthMismatch(x.len(), m.len()));
    }
    if x.len() < 2 {
        return Err(FusionError::DegenerateVector("fewer than two points"));
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation.
pub fn correlation(x: &[f64], m: &[f64]) -> Result<f64, FusionError> {
    check_lengths(x, m)?;
    if is_constant(x) || is_constant(m) {
        return Err(FusionError::DegenerateVector("constant input"));
    }
    let (mx, mm) = (mean(x), mean(m));
    let (mut sxy, mut sxx, mut smm) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(m) {
        let (dx, dm) = (a - mx, b - mm);
        sxy += dx * dm;
        sxx += dx * dx;
        smm += dm * dm;
    }
    if sxx == 0.0 || smm == 0.0 {
        return Err(FusionError::DegenerateVector("constant input"));
    }
    Ok((sxy / (sxx.sqrt() * smm.sqrt())).clamp(-1.0, 1.0))
}

/// `cov(r, rm) / var(rm)`.
pub fn market_beta(r: &[f64], rm: &[f64]) -> Result<f64, FusionError> {
    check_lengths(r, rm)?;
    if is_constant(rm) {
        return Err(FusionError::DegenerateVector("constant market returns"));
    }
    let (mr, mm) = (mean(r), mean(rm));
    let (mut cov, mut var) = (0.0, 0.0);
    for (a, b) in r.iter().zip(rm) {
        cov += (a - mr) * (b - mm);
        var += (b - mm) * (b - mm);
    }
    if var == 0.0 {
        return Err(FusionError::DegenerateVector("constant market returns"));
    }
    Ok(cov / var)
}

/// One predicted time slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub price_pred: f64,
    pub market_pred: f64,
    pub rho: f64,
    pub state: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionDataset {
    pub rows: Vec<FusionRow>,
    /// Real normalized price for each row.
    pub targets: Vec<f64>,
}

impl FusionDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn extend(&mut self, other: FusionDataset) {
        self.rows.extend(other.rows);
        self.targets.extend(other.targets);
    }
}

/// Correlation of a window's predicted price and market paths. A constant
/// path has no defined correlation and contributes `ρ = 0`.
pub fn window_rho(price_pred: &[f64], market_pred: &[f64]) -> Result<f64, FusionError> {
    match correlation(price_pred, market_pred) {
        Ok(rho) => Ok(rho),
        Err(FusionError::DegenerateVector(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Assemble one window's rows. `volume_pred` must already be in the HMM's
/// volume feature space.
pub fn build_dataset(
    price_pred: &[f64],
    market_pred: &[f64],
    volume_pred: &[f64],
    hmm: &GaussianHmm,
    window_real: &[f64],
) -> Result<FusionDataset, FusionError> {
    let n = price_pred.len();
    for len in [market_pred.len(), volume_pred.len(), window_real.len()] {
        if len != n {
            return Err(FusionError::LengthMismatch(n, len));
        }
    }
    let rho = window_rho(price_pred, market_pred)?;
    let obs: Vec<Vec<f64>> = price_pred.iter().zip(volume_pred).map(|(p, v)| vec![*p, *v]).collect();
    let states = viterbi(&obs, hmm)?;
    let rows = (0..n)
        .map(|t| FusionRow {
            price_pred: price_pred[t],
            market_pred: market_pred[t],
            rho,
            state: states[t],
        })
        .collect();
    Ok(FusionDataset {
        rows,
        targets: window_real.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub alpha: f64,
    pub lambda: f64,
    pub eta: f64,
    pub gamma: Vec<f64>,
    pub c: f64,
    pub encoding: StateEncoding,
    /// Set when the design was singular and the small ridge fallback ran.
    pub rank_deficient: bool,
}

impl FusionWeights {
    /// Weights that pass the LSTM prediction through unchanged.
    pub fn identity(encoding: StateEncoding, states: usize) -> Self {
        Self {
            alpha: 1.0,
            lambda: 0.0,
            eta: 0.0,
            gamma: vec![0.0; gamma_len(encoding, states)],
            c: 0.0,
            encoding,
            rank_deficient: false,
        }
    }

    fn from_coefficients(beta: &[f64], encoding: StateEncoding, rank_deficient: bool) -> Self {
        let (gamma, c) = match encoding {
            StateEncoding::Index => (vec![beta[3]], beta[4]),
            StateEncoding::OneHot => (beta[3..].to_vec(), 0.0),
        };
        Self {
            alpha: beta[0],
            lambda: beta[1],
            eta: beta[2],
            gamma,
            c,
            encoding,
            rank_deficient,
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        let mut beta = vec![self.alpha, self.lambda, self.eta];
        beta.extend(&self.gamma);
        if self.encoding == StateEncoding::Index {
            beta.push(self.c);
        }
        beta
    }
}

fn gamma_len(encoding: StateEncoding, states: usize) -> usize {
    match encoding {
        StateEncoding::Index => 1,
        StateEncoding::OneHot => states,
    }
}

/// Design-matrix row for `row`: `[X, ρM, ρ, S…, 1]` (no trailing 1 in
/// one-hot mode).
pub fn regressors(row: &FusionRow, encoding: StateEncoding, states: usize) -> Vec<f64> {
    let mut r = vec![row.price_pred, row.rho * row.market_pred, row.rho];
    match encoding {
        StateEncoding::Index => {
            r.push(row.state as f64);
            r.push(1.0);
        }
        StateEncoding::OneHot => r.extend((0..states).map(|k| if k == row.state { 1.0 } else { 0.0 })),
    }
    r
}

/// Least-squares fit of the fusion coefficients. A singular design (for
/// example `ρ` constant over all rows) is solved with the 1e-8 ridge
/// fallback and flagged in the result.
pub fn fit_fusion(data: &FusionDataset, encoding: StateEncoding, states: usize) -> Result<FusionWeights, FusionError> {
    if data.rows.len() != data.targets.len() {
        return Err(FusionError::LengthMismatch(data.rows.len(), data.targets.len()));
    }
    let p = 3 + gamma_len(encoding, states) + usize::from(encoding == StateEncoding::Index);
    if data.rows.len() < p {
        return Err(FusionError::TooFewRows {
            rows: data.rows.len(),
            coefficients: p,
        });
    }
    let rows: Vec<Vec<f64>> = data.rows.iter().map(|r| regressors(r, encoding, states)).collect();
    let y = DVector::from_column_slice(&data.targets);
    let fit = least_squares(&design(&rows), &y);
    if fit.rank_deficient {
        log::warn!("RankDeficient: fusion design is singular; ridge fallback engaged");
    }
    Ok(FusionWeights::from_coefficients(&fit.coefficients, encoding, fit.rank_deficient))
}

/// Evaluate the fused model on one row (normalized units).
pub fn refine_prediction(row: &FusionRow, weights: &FusionWeights) -> f64 {
    let state_term = match weights.encoding {
        StateEncoding::Index => weights.gamma[0] * row.state as f64,
        StateEncoding::OneHot => weights.gamma.get(row.state).copied().unwrap_or(0.0),
    };
    weights.alpha * row.price_pred + weights.lambda * row.rho * row.market_pred + weights.eta * row.rho + state_term + weights.c
}

/// In-sample squared error of `weights` on `data`.
pub fn fusion_loss(data: &FusionDataset, weights: &FusionWeights) -> f64 {
    data.rows
        .iter()
        .zip(&data.targets)
        .map(|(r, y)| (refine_prediction(r, weights) - y).powi(2))
        .sum()
}
