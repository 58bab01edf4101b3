//! Long-only portfolio allocation on the probability simplex and the
//! window-by-window backtest that evaluates it on realized prices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{cumulative_return, log_returns, MetricsError, ReturnKind};
use crate::rng::SplitMix64;

pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;
pub const DEFAULT_RISK_FREE: f64 = 0.015;
pub const DEFAULT_RESTARTS: usize = 20;
pub const MAX_ITERATIONS: usize = 5000;
pub const GRADIENT_TOLERANCE: f64 = 1e-10;

/// Below this annualized variance a portfolio is treated as riskless.
const ZERO_VARIANCE: f64 = 1e-18;

#[derive(Debug, Error)]
pub enum PortfolioError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("return panel needs at least one asset and two days")]
    EmptyPanel,
    #[error("non-finite return for asset {asset} on day {day}")]
    NonFinite { day: usize, asset: usize },
    #[error("covariance matrix is identically zero")]
    ZeroCovariance,
    #[error("a riskless portfolio beats the risk-free rate; Sharpe ratio is unbounded")]
    ZeroVariancePortfolio { weights: Vec<f64> },
    #[error("no asset passed the selection threshold")]
    EmptySelection,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Daily log returns, `[day][asset]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub returns: Vec<Vec<f64>>,
    pub trading_days_per_year: f64,
}

impl ReturnPanel {
    pub fn new(returns: Vec<Vec<f64>>) -> Result<Self, PortfolioError> {
        let assets = returns.first().map_or(0, Vec::len);
        if returns.len() < 2 || assets == 0 {
            return Err(PortfolioError::EmptyPanel);
        }
        for (day, row) in returns.iter().enumerate() {
            if row.len() != assets {
                return Err(PortfolioError::DimensionMismatch {
                    expected: assets,
                    found: row.len(),
                });
            }
            if let Some(asset) = row.iter().position(|r| !r.is_finite()) {
                return Err(PortfolioError::NonFinite { day, asset });
            }
        }
        Ok(Self {
            returns,
            trading_days_per_year: TRADING_DAYS_PER_YEAR,
        })
    }

    /// Log returns of each asset's price path; paths are `[asset][day]`.
    pub fn from_prices(paths: &[Vec<f64>]) -> Result<Self, PortfolioError> {
        let per_asset: Vec<Vec<f64>> = paths.iter().map(|p| log_returns(p)).collect::<Result<_, _>>()?;
        let days = per_asset.first().map_or(0, Vec::len);
        if per_asset.iter().any(|r| r.len() != days) {
            return Err(PortfolioError::DimensionMismatch {
                expected: days,
                found: per_asset.iter().map(Vec::len).find(|&l| l != days).unwrap_or(0),
            });
        }
        Self::new((0..days).map(|d| per_asset.iter().map(|r| r[d]).collect()).collect())
    }

    pub fn n_assets(&self) -> usize {
        self.returns[0].len()
    }

    pub fn n_days(&self) -> usize {
        self.returns.len()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.n_days() as f64;
        (0..self.n_assets())
            .map(|a| self.returns.iter().map(|r| r[a]).sum::<f64>() / n)
            .collect()
    }

    /// Sample covariance of daily returns (divisor `n − 1`).
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let mu = self.means();
        let k = self.n_assets();
        let denom = (self.n_days() - 1) as f64;
        let mut cov = vec![vec![0.0; k]; k];
        for row in &self.returns {
            for i in 0..k {
                let di = row[i] - mu[i];
                for j in i..k {
                    cov[i][j] += di * (row[j] - mu[j]);
                }
            }
        }
        for i in 0..k {
            for j in i..k {
                cov[i][j] /= denom;
                cov[j][i] = cov[i][j];
            }
        }
        cov
    }

    /// Annualized mean vector and covariance matrix.
    pub fn moments(&self) -> Moments {
        let scale = self.trading_days_per_year;
        Moments {
            mean: self.means().iter().map(|m| m * scale).collect(),
            cov: self
                .covariance()
                .iter()
                .map(|row| row.iter().map(|c| c * scale).collect())
                .collect(),
        }
    }
}

/// Annualized first and second moments of the asset returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl Moments {
    pub fn n_assets(&self) -> usize {
        self.mean.len()
    }

    pub fn portfolio_return(&self, w: &[f64]) -> f64 {
        w.iter().zip(&self.mean).map(|(a, b)| a * b).sum()
    }

    pub fn portfolio_variance(&self, w: &[f64]) -> f64 {
        self.cov_times(w).iter().zip(w).map(|(a, b)| a * b).sum::<f64>().max(0.0)
    }

    fn cov_times(&self, w: &[f64]) -> Vec<f64> {
        self.cov
            .iter()
            .map(|row| row.iter().zip(w).map(|(c, x)| c * x).sum())
            .collect()
    }

    pub fn sharpe(&self, w: &[f64], risk_free: f64) -> f64 {
        let sigma = self.portfolio_variance(w).sqrt();
        let excess = self.portfolio_return(w) - risk_free;
        if sigma > 0.0 {
            excess / sigma
        } else if excess > 0.0 {
            f64::INFINITY
        } else if excess < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }
}

fn check_weights(w: &[f64], panel: &ReturnPanel) -> Result<(), PortfolioError> {
    if w.len() != panel.n_assets() {
        return Err(PortfolioError::DimensionMismatch {
            expected: panel.n_assets(),
            found: w.len(),
        });
    }
    Ok(())
}

/// `252 · Σ w_ℓ · mean(R_ℓ)`.
pub fn annualized_return(w: &[f64], panel: &ReturnPanel) -> Result<f64, PortfolioError> {
    check_weights(w, panel)?;
    Ok(panel.moments().portfolio_return(w))
}

/// `252 · wᵀ Σ w`.
pub fn portfolio_variance(w: &[f64], panel: &ReturnPanel) -> Result<f64, PortfolioError> {
    check_weights(w, panel)?;
    Ok(panel.moments().portfolio_variance(w))
}

pub fn sharpe_ratio(w: &[f64], panel: &ReturnPanel, risk_free: f64) -> Result<f64, PortfolioError> {
    check_weights(w, panel)?;
    Ok(panel.moments().sharpe(w, risk_free))
}

/// Euclidean projection onto `{w ≥ 0, Σw = 1}` by the sort-and-threshold
/// method.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // Remove the rounding residue so the weights sum to one.
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Weights together with their annualized statistics on the panel they
/// were fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioWeights {
    pub weights: Vec<f64>,
    pub expected_return: f64,
    pub volatility: f64,
    pub sharpe: f64,
}

impl PortfolioWeights {
    fn evaluate(weights: Vec<f64>, moments: &Moments, risk_free: f64) -> Self {
        Self {
            expected_return: moments.portfolio_return(&weights),
            volatility: moments.portfolio_variance(&weights).sqrt(),
            sharpe: moments.sharpe(&weights, risk_free),
            weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: DEFAULT_RESTARTS,
            max_iterations: MAX_ITERATIONS,
            tolerance: GRADIENT_TOLERANCE,
            seed: 0,
        }
    }
}

/// Flat Dirichlet draw via normalized exponentials.
fn dirichlet(n: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.next_f64()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Starting points: equal weight, every vertex, then random restarts.
fn starting_points(n: usize, config: &SolverConfig) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(config.seed);
    let mut starts = vec![vec![1.0 / n as f64; n]];
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        starts.push(v);
    }
    starts.extend((0..config.restarts).map(|_| dirichlet(n, &mut rng)));
    starts
}

/// Projected gradient descent with backtracking on `f` over the simplex.
fn projected_gradient<F, G>(start: Vec<f64>, f: F, grad: G, config: &SolverConfig) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut w = project_to_simplex(&start);
    let mut fw = f(&w);
    let mut step = 1.0;
    for _ in 0..config.max_iterations {
        let g = grad(&w);
        // Unit-step gradient mapping measures stationarity on the simplex.
        let probe = project_to_simplex(&w.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>());
        let mapping: f64 = probe.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if mapping < config.tolerance {
            break;
        }
        let mut accepted = false;
        while step > 1e-20 {
            let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let next = project_to_simplex(&trial);
            let delta: Vec<f64> = next.iter().zip(&w).map(|(a, b)| a - b).collect();
            let fnext = f(&next);
            let bound = fw
                + g.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>()
                + delta.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
            if fnext <= bound {
                let moved = delta.iter().any(|d| *d != 0.0);
                w = next;
                fw = fnext;
                accepted = moved;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    w
}

fn best_of<F: Fn(&[f64]) -> f64>(candidates: Vec<Vec<f64>>, objective: F) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for w in candidates {
        let value = objective(&w);
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, w));
        }
    }
    best.map(|(_, w)| w).unwrap_or_default()
}

fn check_covariance(moments: &Moments) -> Result<(), PortfolioError> {
    if moments.cov.iter().flatten().all(|c| *c == 0.0) {
        return Err(PortfolioError::ZeroCovariance);
    }
    Ok(())
}

/// Maximum-Sharpe weights by projected gradient ascent from equal weight,
/// each vertex and `restarts` random starts; the best end point wins.
///
/// When some fully invested portfolio has zero variance and beats the
/// risk-free rate, the Sharpe ratio is unbounded; that case returns
/// [`PortfolioError::ZeroVariancePortfolio`] carrying the riskless weights.
pub fn max_sharpe(panel: &ReturnPanel, risk_free: f64, config: &SolverConfig) -> Result<PortfolioWeights, PortfolioError> {
    let moments = panel.moments();
    let n = moments.n_assets();
    if n == 1 {
        return Ok(PortfolioWeights::evaluate(vec![1.0], &moments, risk_free));
    }
    let min_var = min_variance_weights(&moments, config);
    if moments.portfolio_variance(&min_var) <= ZERO_VARIANCE && moments.portfolio_return(&min_var) > risk_free {
        // Among riskless portfolios prefer the highest return: tilt toward
        // riskless assets with the best mean.
        let riskless: Vec<usize> = (0..n).filter(|&i| moments.cov[i][i] <= ZERO_VARIANCE).collect();
        let weights = match riskless.iter().max_by(|&&a, &&b| moments.mean[a].total_cmp(&moments.mean[b])) {
            Some(&i) if moments.mean[i] >= moments.portfolio_return(&min_var) => {
                let mut w = vec![0.0; n];
                w[i] = 1.0;
                w
            }
            _ => min_var,
        };
        log::warn!("ZeroVariancePortfolio: riskless portfolio beats the risk-free rate");
        return Err(PortfolioError::ZeroVariancePortfolio { weights });
    }
    check_covariance(&moments)?;
    let neg_sharpe = |w: &[f64]| {
        let s = moments.sharpe(w, risk_free);
        if s.is_finite() {
            -s
        } else {
            f64::INFINITY
        }
    };
    let grad = |w: &[f64]| {
        let var = moments.portfolio_variance(w).max(ZERO_VARIANCE);
        let sigma = var.sqrt();
        let excess = moments.portfolio_return(w) - risk_free;
        let cw = moments.cov_times(w);
        (0..n)
            .map(|i| -(moments.mean[i] * sigma - excess * cw[i] / sigma) / var)
            .collect()
    };
    let candidates: Vec<Vec<f64>> = starting_points(n, config)
        .into_iter()
        .flat_map(|start| {
            let end = projected_gradient(start.clone(), neg_sharpe, grad, config);
            [start, end]
        })
        .collect();
    let weights = best_of(candidates, neg_sharpe);
    Ok(PortfolioWeights::evaluate(weights, &moments, risk_free))
}

fn min_variance_weights(moments: &Moments, config: &SolverConfig) -> Vec<f64> {
    let var = |w: &[f64]| moments.portfolio_variance(w);
    let grad = |w: &[f64]| moments.cov_times(w).iter().map(|c| 2.0 * c).collect::<Vec<f64>>();
    let candidates: Vec<Vec<f64>> = starting_points(moments.n_assets(), config)
        .into_iter()
        .flat_map(|start| {
            let end = projected_gradient(start.clone(), var, grad, config);
            [start, end]
        })
        .collect();
    best_of(candidates, var)
}

/// Minimum-variance weights under the same solver contract as
/// [`max_sharpe`]. The reported Sharpe uses `risk_free`.
pub fn min_variance(panel: &ReturnPanel, risk_free: f64, config: &SolverConfig) -> Result<PortfolioWeights, PortfolioError> {
    let moments = panel.moments();
    let weights = min_variance_weights(&moments, config);
    Ok(PortfolioWeights::evaluate(weights, &moments, risk_free))
}

/// Which stocks are eligible for a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionMode {
    /// Every stock whose predicted cumulative return exceeds `threshold`.
    All { threshold: f64 },
    /// The `count` stocks most correlated with the market over training,
    /// then the same threshold rule.
    HighCorrelation { count: usize, threshold: f64 },
}

impl Default for SelectionMode {
    fn default() -> Self {
        SelectionMode::All { threshold: 1.15 }
    }
}

impl SelectionMode {
    pub fn high_correlation_default() -> Self {
        SelectionMode::HighCorrelation {
            count: 50,
            threshold: 1.05,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            SelectionMode::All { threshold } | SelectionMode::HighCorrelation { threshold, .. } => *threshold,
        }
    }
}

/// Stocks with the `count` highest correlations, ties broken by index.
pub fn most_correlated(market_correlation: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..market_correlation.len()).collect();
    order.sort_by(|&a, &b| market_correlation[b].total_cmp(&market_correlation[a]).then(a.cmp(&b)));
    order.truncate(count);
    order.sort_unstable();
    order
}

/// Indices of the selected stocks, in index order. `predicted` holds one
/// price path per stock.
pub fn select_assets(
    predicted: &[Vec<f64>],
    market_correlation: &[f64],
    mode: &SelectionMode,
    kind: ReturnKind,
) -> Result<Vec<usize>, PortfolioError> {
    let pool: Vec<usize> = match mode {
        SelectionMode::All { .. } => (0..predicted.len()).collect(),
        SelectionMode::HighCorrelation { count, .. } => {
            if market_correlation.len() != predicted.len() {
                return Err(PortfolioError::DimensionMismatch {
                    expected: predicted.len(),
                    found: market_correlation.len(),
                });
            }
            most_correlated(market_correlation, *count)
        }
    };
    let mut selected = Vec::new();
    for i in pool {
        if cumulative_return(&predicted[i], kind)? > mode.threshold() {
            selected.push(i);
        }
    }
    if selected.is_empty() {
        return Err(PortfolioError::EmptySelection);
    }
    Ok(selected)
}

/// Predicted path used for allocation: the short-term model before
/// `split_day`, the midterm model from it on.
pub fn composite_path(short_term: &[f64], midterm: &[f64], split_day: usize) -> Vec<f64> {
    short_term[..split_day]
        .iter()
        .chain(&midterm[split_day..])
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationMethod {
    MeanVariance,
    MinimumVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    pub selection: SelectionMode,
    pub risk_free: f64,
    pub return_kind: ReturnKind,
    pub solver: SolverConfig,
    /// Random portfolios sampled per window for the frontier export.
    pub frontier_samples: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            selection: SelectionMode::default(),
            risk_free: DEFAULT_RISK_FREE,
            return_kind: ReturnKind::Log,
            solver: SolverConfig::default(),
            frontier_samples: 200,
        }
    }
}

/// One investment window: predicted and realized price paths, `[stock][day]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestWindow {
    pub predicted: Vec<Vec<f64>>,
    pub realized: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub method: AllocationMethod,
    pub weights: Vec<f64>,
    pub predicted_sharpe: f64,
    /// `Σ w_ℓ (C_ℓ − 1)` with `C_ℓ` the realized cumulative return.
    pub window_return: f64,
    pub realized_annualized_return: f64,
    pub realized_sharpe: f64,
    /// Set when the predicted panel admitted a riskless portfolio.
    pub zero_variance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub selected: Vec<String>,
    pub predicted_cumulative: Vec<f64>,
    pub allocations: Vec<AllocationResult>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: AllocationMethod,
    pub average_return: f64,
    pub best_return: f64,
    pub average_sharpe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub window: usize,
    pub volatility: f64,
    pub expected_return: f64,
    pub sharpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub windows: Vec<WindowReport>,
    pub summary: Vec<MethodSummary>,
    #[serde(skip)]
    pub frontier: Vec<FrontierPoint>,
}

fn subset(paths: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| paths[i].clone()).collect()
}

/// Allocate on predicted paths and score on realized ones, window by window.
/// A window with no eligible stock holds nothing and earns zero.
pub fn backtest(
    tickers: &[String],
    windows: &[BacktestWindow],
    market_correlation: &[f64],
    config: &BacktestConfig,
) -> Result<BacktestReport, PortfolioError> {
    let methods = [AllocationMethod::MeanVariance, AllocationMethod::MinimumVariance];
    let mut reports = Vec::with_capacity(windows.len());
    let mut frontier = Vec::new();
    for (w, window) in windows.iter().enumerate() {
        if window.predicted.len() != tickers.len() || window.realized.len() != tickers.len() {
            return Err(PortfolioError::DimensionMismatch {
                expected: tickers.len(),
                found: window.predicted.len().min(window.realized.len()),
            });
        }
        let predicted_cumulative = window
            .predicted
            .iter()
            .map(|p| cumulative_return(p, config.return_kind))
            .collect::<Result<Vec<_>, _>>()?;
        let selected = match select_assets(&window.predicted, market_correlation, &config.selection, config.return_kind) {
            Ok(s) => s,
            Err(PortfolioError::EmptySelection) => {
                log::info!("window {}: EmptySelection, holding cash", w + 1);
                reports.push(WindowReport {
                    window: w + 1,
                    selected: Vec::new(),
                    predicted_cumulative,
                    allocations: methods
                        .iter()
                        .map(|&method| AllocationResult {
                            method,
                            weights: Vec::new(),
                            predicted_sharpe: 0.0,
                            window_return: 0.0,
                            realized_annualized_return: 0.0,
                            realized_sharpe: 0.0,
                            zero_variance: false,
                        })
                        .collect(),
                    skipped: true,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let predicted_panel = ReturnPanel::from_prices(&subset(&window.predicted, &selected))?;
        let realized_paths = subset(&window.realized, &selected);
        let realized_panel = ReturnPanel::from_prices(&realized_paths)?;
        let realized_cumulative = realized_paths
            .iter()
            .map(|p| cumulative_return(p, config.return_kind))
            .collect::<Result<Vec<_>, _>>()?;
        let moments = predicted_panel.moments();
        let mut sample_rng = SplitMix64::new(config.solver.seed).split(w as u64 + 1);
        frontier.extend((0..config.frontier_samples).map(|_| {
            let wts = dirichlet(selected.len(), &mut sample_rng);
            let p = PortfolioWeights::evaluate(wts, &moments, config.risk_free);
            FrontierPoint {
                window: w + 1,
                volatility: p.volatility,
                expected_return: p.expected_return,
                sharpe: p.sharpe,
            }
        }));
        let mut allocations = Vec::with_capacity(2);
        for method in methods {
            let (weights, zero_variance) = match method {
                AllocationMethod::MeanVariance => match max_sharpe(&predicted_panel, config.risk_free, &config.solver) {
                    Ok(p) => (p.weights, false),
                    Err(PortfolioError::ZeroVariancePortfolio { weights }) => (weights, true),
                    Err(PortfolioError::ZeroCovariance) => {
                        // Flat predictions: no risk information, spread evenly.
                        (vec![1.0 / selected.len() as f64; selected.len()], true)
                    }
                    Err(e) => return Err(e),
                },
                AllocationMethod::MinimumVariance => {
                    (min_variance(&predicted_panel, config.risk_free, &config.solver)?.weights, false)
                }
            };
            let window_return = weights
                .iter()
                .zip(&realized_cumulative)
                .map(|(wt, c)| wt * (c - 1.0))
                .sum();
            let realized = realized_panel.moments();
            allocations.push(AllocationResult {
                method,
                predicted_sharpe: moments.sharpe(&weights, config.risk_free),
                window_return,
                realized_annualized_return: realized.portfolio_return(&weights),
                realized_sharpe: finite_or_zero(realized.sharpe(&weights, config.risk_free)),
                zero_variance,
                weights,
            });
        }
        reports.push(WindowReport {
            window: w + 1,
            selected: selected.iter().map(|&i| tickers[i].clone()).collect(),
            predicted_cumulative,
            allocations,
            skipped: false,
        });
    }
    let summary = methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let returns: Vec<f64> = reports.iter().map(|r| r.allocations[m].window_return).collect();
            let sharpes: Vec<f64> = reports.iter().map(|r| r.allocations[m].realized_sharpe).collect();
            let n = returns.len().max(1) as f64;
            MethodSummary {
                method,
                average_return: returns.iter().sum::<f64>() / n,
                best_return: returns.iter().copied().reduce(f64::max).unwrap_or(0.0),
                average_sharpe: sharpes.iter().sum::<f64>() / n,
            }
        })
        .collect();
    Ok(BacktestReport {
        windows: reports,
        summary,
        frontier,
    })
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn panel(rows: Vec<Vec<f64>>) -> ReturnPanel {
        ReturnPanel::new(rows).unwrap()
    }

    fn random_panel(days: usize, assets: usize, seed: u64, correlated: bool) -> ReturnPanel {
        let mut rng = SplitMix64::new(seed);
        let vols: Vec<f64> = (0..assets).map(|_| rng.uniform(0.005, 0.03)).collect();
        let drifts: Vec<f64> = (0..assets).map(|_| rng.uniform(-0.001, 0.003)).collect();
        panel(
            (0..days)
                .map(|_| {
                    let common = rng.standard_normal();
                    (0..assets)
                        .map(|a| {
                            let shock = if correlated {
                                0.6 * common + 0.8 * rng.standard_normal()
                            } else {
                                rng.standard_normal()
                            };
                            drifts[a] + vols[a] * shock
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Every simplex point on a grid with `steps` divisions per axis.
    fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
        fn rec(n: usize, left: usize, steps: usize, prefix: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
            if n == 1 {
                prefix.push(left as f64 / steps as f64);
                out.push(prefix.clone());
                prefix.pop();
                return;
            }
            for k in 0..=left {
                prefix.push(k as f64 / steps as f64);
                rec(n - 1, left - k, steps, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(n, steps, steps, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn annualized_return_cases() {
        let p = panel(vec![vec![0.001]; 10]);
        assert!((annualized_return(&[1.0], &p).unwrap() - 0.252).abs() < 1e-12);
        let p = panel(vec![vec![0.001, 0.003], vec![0.003, 0.001]]);
        assert!((annualized_return(&[0.5, 0.5], &p).unwrap() - 252.0 * 0.002).abs() < 1e-12);
        assert!(matches!(annualized_return(&[1.0], &p), Err(PortfolioError::DimensionMismatch { .. })));
    }

    #[test]
    fn annualized_return_matches_two_pass_mean() {
        let p = random_panel(50, 3, 1, true);
        let w = [0.2, 0.5, 0.3];
        let mut expected = 0.0;
        for (a, wa) in w.iter().enumerate() {
            let mut total = 0.0;
            for row in &p.returns {
                total += row[a];
            }
            expected += wa * total / 50.0;
        }
        assert!((annualized_return(&w, &p).unwrap() - 252.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn variance_cases() {
        let p = panel(vec![vec![0.01], vec![-0.01], vec![0.02], vec![0.0]]);
        let mean = 0.005;
        let v = [0.01f64, -0.01, 0.02, 0.0].iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((portfolio_variance(&[1.0], &p).unwrap() - 252.0 * v).abs() < 1e-15);
        // Orthogonal sign patterns give an exactly diagonal covariance.
        let a = 0.02;
        let p = panel(vec![vec![a, a], vec![-a, a], vec![a, -a], vec![-a, -a]]);
        let v = 4.0 * a * a / 3.0;
        assert!((portfolio_variance(&[0.5, 0.5], &p).unwrap() - 126.0 * v).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_double_sum() {
        let p = random_panel(40, 3, 2, true);
        let w = [0.1, 0.6, 0.3];
        let mut mu = [0.0; 3];
        for row in &p.returns {
            for a in 0..3 {
                mu[a] += row[a] / 40.0;
            }
        }
        let mut total = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let cov: f64 = p.returns.iter().map(|r| (r[i] - mu[i]) * (r[j] - mu[j])).sum::<f64>() / 39.0;
                total += w[i] * w[j] * cov;
            }
        }
        assert!((portfolio_variance(&w, &p).unwrap() - 252.0 * total).abs() < 1e-14);
    }

    #[test]
    fn projection_cases() {
        assert_eq!(project_to_simplex(&[0.2, 0.3, 0.5]), vec![0.2, 0.3, 0.5]);
        assert_eq!(project_to_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let w = project_to_simplex(&[0.5, 0.5, -3.0, 0.2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn projection_matches_grid_minimizer() {
        let mut rng = SplitMix64::new(3);
        let v: Vec<f64> = (0..5).map(|_| rng.uniform(-0.5, 1.0)).collect();
        let w = project_to_simplex(&v);
        let dist = |u: &[f64]| u.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = simplex_grid(5, 40).into_iter().map(|u| dist(&u)).fold(f64::INFINITY, f64::min);
        assert!(dist(&w) <= best + 1e-12);
        // Grid spacing 1/40 bounds how far the grid optimum can sit.
        assert!(best - dist(&w) < 5.0 * (1.0 / 40.0f64).powi(2));
    }

    #[test]
    fn single_asset_takes_everything() {
        let p = random_panel(30, 1, 4, false);
        let cfg = SolverConfig::default();
        assert_eq!(max_sharpe(&p, DEFAULT_RISK_FREE, &cfg).unwrap().weights, vec![1.0]);
        assert_eq!(min_variance(&p, DEFAULT_RISK_FREE, &cfg).unwrap().weights, vec![1.0]);
    }

    #[test]
    fn identical_assets_match_single_asset_sharpe() {
        let single = random_panel(60, 1, 5, false);
        let twin = panel(single.returns.iter().map(|r| vec![r[0], r[0]]).collect());
        let cfg = SolverConfig::default();
        let s1 = max_sharpe(&single, DEFAULT_RISK_FREE, &cfg).unwrap();
        let s2 = max_sharpe(&twin, DEFAULT_RISK_FREE, &cfg).unwrap();
        assert!((s2.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((s1.sharpe - s2.sharpe).abs() < 1e-9);
    }

    #[test]
    fn max_sharpe_matches_grid_search() {
        let mut rng = SplitMix64::new(6);
        // Independent assets with distinct drifts and volatilities.
        let p = panel(
            (0..80)
                .map(|_| {
                    vec![
                        0.002 + 0.01 * rng.standard_normal(),
                        0.001 + 0.02 * rng.standard_normal(),
                        0.0015 + 0.015 * rng.standard_normal(),
                    ]
                })
                .collect(),
        );
        let m = p.moments();
        let best = simplex_grid(3, 100)
            .iter()
            .map(|w| m.sharpe(w, DEFAULT_RISK_FREE))
            .fold(f64::NEG_INFINITY, f64::max);
        let got = max_sharpe(&p, DEFAULT_RISK_FREE, &SolverConfig::default()).unwrap();
        assert!(got.sharpe >= best - 1e-3, "{} vs grid {best}", got.sharpe);
    }

    #[test]
    fn two_asset_min_variance_closed_form() {
        let (a, b) = (0.02, 0.01);
        let p = panel(vec![vec![a, b], vec![-a, b], vec![a, -b], vec![-a, -b]]);
        let (v1, v2) = (4.0 * a * a / 3.0, 4.0 * b * b / 3.0);
        let w = min_variance(&p, DEFAULT_RISK_FREE, &SolverConfig::default()).unwrap();
        assert!((w.weights[0] - v2 / (v1 + v2)).abs() < 1e-6, "{:?}", w.weights);
    }

    #[test]
    fn riskless_asset_gets_full_min_variance_weight() {
        let mut rng = SplitMix64::new(7);
        let p = panel((0..30).map(|_| vec![0.01 * rng.standard_normal(), 0.0001, 0.02 * rng.standard_normal()]).collect());
        let w = min_variance(&p, DEFAULT_RISK_FREE, &SolverConfig::default()).unwrap();
        assert!((w.weights[1] - 1.0).abs() < 1e-9, "{:?}", w.weights);
        // It also earns 2.52% a year, above the risk-free rate.
        assert!(matches!(
            max_sharpe(&p, DEFAULT_RISK_FREE, &SolverConfig::default()),
            Err(PortfolioError::ZeroVariancePortfolio { .. })
        ));
    }

    #[test]
    fn four_asset_min_variance_matches_grid() {
        let p = random_panel(60, 4, 8, true);
        let m = p.moments();
        let best = simplex_grid(4, 50)
            .iter()
            .map(|w| m.portfolio_variance(w))
            .fold(f64::INFINITY, f64::min);
        let got = min_variance(&p, DEFAULT_RISK_FREE, &SolverConfig::default()).unwrap();
        assert!(m.portfolio_variance(&got.weights) <= best + 1e-4);
    }

    #[test]
    fn selection_cases() {
        let flat = vec![vec![10.0; 60]; 3];
        let all = SelectionMode::All { threshold: 1.15 };
        assert!(matches!(select_assets(&flat, &[], &all, ReturnKind::Log), Err(PortfolioError::EmptySelection)));
        let mut paths = flat.clone();
        paths[1] = (0..60).map(|d| 10.0 * (1.0 + 0.2 * d as f64 / 59.0)).collect();
        assert!(cumulative_return(&paths[1], ReturnKind::Log).unwrap() > 1.15);
        assert_eq!(select_assets(&paths, &[], &all, ReturnKind::Log).unwrap(), vec![1]);
        let hc = SelectionMode::HighCorrelation {
            count: 1,
            threshold: 1.05,
        };
        assert!(matches!(
            select_assets(&paths, &[0.9, 0.1, 0.5], &hc, ReturnKind::Log),
            Err(PortfolioError::EmptySelection)
        ));
        assert_eq!(select_assets(&paths, &[0.1, 0.9, 0.5], &hc, ReturnKind::Log).unwrap(), vec![1]);
    }

    #[test]
    fn planted_winners_are_selected() {
        // Twenty stocks; the planted ones grow 30% over the window.
        let winners = [2usize, 7, 11, 19];
        let paths: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let growth = if winners.contains(&k) { 0.3 } else { 0.02 * (k % 3) as f64 };
                (0..60).map(|d| 20.0 * (1.0 + growth * d as f64 / 59.0)).collect()
            })
            .collect();
        let sel = select_assets(&paths, &[], &SelectionMode::All { threshold: 1.15 }, ReturnKind::Log).unwrap();
        assert_eq!(sel, winners.to_vec());
    }

    #[test]
    fn oracle_predictor_backtest_return() {
        let rising: Vec<f64> = (0..60).map(|d| 50.0 * (1.0 + 0.004 * d as f64 + 0.002 * (d % 2) as f64)).collect();
        let flat = vec![30.0; 60];
        let window = BacktestWindow {
            predicted: vec![rising.clone(), flat.clone()],
            realized: vec![rising.clone(), flat],
        };
        let tickers = vec!["UP".to_string(), "FLAT".to_string()];
        let report = backtest(&tickers, &[window], &[0.5, 0.5], &BacktestConfig::default()).unwrap();
        let c = cumulative_return(&rising, ReturnKind::Log).unwrap();
        assert_eq!(report.windows[0].selected, vec!["UP".to_string()]);
        for a in &report.windows[0].allocations {
            assert!((a.window_return - (c - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_asset_gets_most_weight() {
        let mut rng = SplitMix64::new(9);
        // Asset 0 has the highest drift and the lowest volatility.
        let path = |drift: f64, vol: f64, rng: &mut SplitMix64| {
            let mut p = vec![100.0];
            for _ in 1..60 {
                let last = *p.last().unwrap();
                p.push(last * (drift + vol * rng.standard_normal()).exp());
            }
            p
        };
        let paths = vec![path(0.006, 0.002, &mut rng), path(0.004, 0.02, &mut rng), path(0.0045, 0.025, &mut rng)];
        let window = BacktestWindow {
            predicted: paths.clone(),
            realized: paths.clone(),
        };
        let config = BacktestConfig {
            selection: SelectionMode::All { threshold: 0.0 },
            ..BacktestConfig::default()
        };
        let tickers: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let report = backtest(&tickers, &[window], &[0.0; 3], &config).unwrap();
        let w = &report.windows[0];
        assert_eq!(w.selected.len(), 3);
        let cums: Vec<f64> = paths.iter().map(|p| cumulative_return(p, ReturnKind::Log).unwrap()).collect();
        for a in &w.allocations {
            assert!(a.weights[0] > 0.9, "{:?}", a.weights);
            let expected: f64 = a.weights.iter().zip(&cums).map(|(x, c)| x * (c - 1.0)).sum();
            assert!((a.window_return - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_selection_holds_cash() {
        let flat = vec![vec![10.0; 60]; 2];
        let window = BacktestWindow {
            predicted: flat.clone(),
            realized: flat,
        };
        let tickers = vec!["A".to_string(), "B".to_string()];
        let report = backtest(&tickers, &[window], &[0.0; 2], &BacktestConfig::default()).unwrap();
        assert!(report.windows[0].skipped);
        assert_eq!(report.summary[0].average_return, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn solutions_respect_simplex_and_beat_simple_portfolios(seed in 0u64..10_000, n in 2usize..5) {
            let p = random_panel(40, n, seed, true);
            let m = p.moments();
            let cfg = SolverConfig { seed, ..SolverConfig::default() };
            for sol in [max_sharpe(&p, DEFAULT_RISK_FREE, &cfg), min_variance(&p, DEFAULT_RISK_FREE, &cfg)] {
                let w = sol.unwrap().weights;
                prop_assert!(w.iter().all(|x| *x >= -1e-12));
                prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            let ms = max_sharpe(&p, DEFAULT_RISK_FREE, &cfg).unwrap();
            let mv = min_variance(&p, DEFAULT_RISK_FREE, &cfg).unwrap();
            prop_assert!(ms.sharpe >= m.sharpe(&vec![1.0 / n as f64; n], DEFAULT_RISK_FREE) - 1e-6);
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                prop_assert!(ms.sharpe >= m.sharpe(&e, DEFAULT_RISK_FREE) - 1e-6);
                prop_assert!(m.portfolio_variance(&mv.weights) <= m.portfolio_variance(&e) + 1e-12);
            }
            prop_assert_eq!(max_sharpe(&p, DEFAULT_RISK_FREE, &cfg).unwrap(), ms);
        }

        #[test]
        fn variance_never_negative(seed in 0u64..10_000, raw in prop::collection::vec(0.0f64..1.0, 3)) {
            let p = random_panel(20, 3, seed, true);
            let w = project_to_simplex(&raw);
            prop_assert!(portfolio_variance(&w, &p).unwrap() >= 0.0);
        }

        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
            let w = project_to_simplex(&v);
            prop_assert!(w.iter().all(|x| *x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
