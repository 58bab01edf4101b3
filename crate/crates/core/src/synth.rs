//! Seeded synthetic markets for desk-scale verification.

use std::f64::consts::PI;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PriceTable;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub days: usize,
    pub amplitude: f64,
    pub period: f64,
    pub level_offset: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub n_stocks: usize,
    /// Per-stock exposure to the market factor. Empty means `0.05·(k+1)`.
    pub market_loading: Vec<f64>,
    /// Typical daily share count in the quiet volume regime.
    pub base_volume: f64,
    /// Standard deviation of the log-normal volume jitter.
    pub volume_jitter: f64,
    pub start_date: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 600,
            amplitude: 1.0,
            period: 120.0,
            level_offset: 2.0,
            noise_std: 0.05,
            seed: 42,
            n_stocks: 1,
            market_loading: Vec::new(),
            base_volume: 1.0e6,
            volume_jitter: 0.1,
            start_date: "2009-01-02".into(),
        }
    }
}

impl SynthConfig {
    /// Defaults for the multi-stock factor market: 20 stocks, log-level
    /// amplitude 0.15 and a 240-day market cycle.
    pub fn factor_market() -> Self {
        Self {
            days: 1200,
            amplitude: 0.15,
            period: 240.0,
            level_offset: 100.0,
            noise_std: 0.02,
            n_stocks: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.period > 0.0) {
            return bad("period must be positive");
        }
        if !(self.noise_std >= 0.0) {
            return bad("noise_std must be non-negative");
        }
        if !(self.level_offset > self.amplitude) {
            return bad("level_offset must exceed amplitude");
        }
        if self.days == 0 {
            return bad("days must be positive");
        }
        if !self.market_loading.is_empty() && self.market_loading.len() != self.n_stocks {
            return bad("market_loading length must equal n_stocks");
        }
        if !(self.volume_jitter >= 0.0) {
            return bad("volume_jitter must be non-negative");
        }
        if !(self.base_volume > 0.0) {
            return bad("base_volume must be positive");
        }
        parse_start(&self.start_date)?;
        Ok(())
    }

    pub fn loadings(&self) -> Vec<f64> {
        if self.market_loading.is_empty() {
            (0..self.n_stocks).map(|k| 0.05 * (k + 1) as f64).collect()
        } else {
            self.market_loading.clone()
        }
    }
}

fn parse_start(s: &str) -> Result<NaiveDate, SynthError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|e| SynthError::InvalidConfig(format!("start_date `{s}`: {e}")))
}

/// `count` consecutive weekdays starting at `start` (or the next weekday).
pub fn business_days(start: &str, count: usize) -> Result<Vec<String>, SynthError> {
    let mut day = parse_start(start)?;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(day.format("%Y-%m-%d").to_string());
        }
        day += Duration::days(1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SineSeries {
    pub price: Vec<f64>,
    pub volume: Vec<f64>,
    /// The noiseless sinusoid underlying `price`.
    pub trend: Vec<f64>,
}

/// `price_t = offset + A·sin(2πt/period) + ε_t`.
///
/// Volume has two planted regimes: elevated (3×) whenever the trend is within
/// 45° of a peak or trough, quiet otherwise, each with 10% log-normal jitter.
pub fn generate_sine_noise(config: &SynthConfig) -> Result<SineSeries, SynthError> {
    config.validate()?;
    let mut rng = SplitMix64::new(config.seed);
    let mut price_rng = rng.split(0);
    let mut volume_rng = rng.split(1);
    let mut price = Vec::with_capacity(config.days);
    let mut volume = Vec::with_capacity(config.days);
    let mut trend = Vec::with_capacity(config.days);
    for t in 0..config.days {
        let phase = (2.0 * PI * t as f64 / config.period).sin();
        let clean = config.level_offset + config.amplitude * phase;
        trend.push(clean);
        price.push(clean + config.noise_std * price_rng.standard_normal());
        let regime = if phase.abs() > std::f64::consts::FRAC_1_SQRT_2 { 3.0 } else { 1.0 };
        volume.push(config.base_volume * regime * (config.volume_jitter * volume_rng.standard_normal()).exp());
    }
    Ok(SineSeries { price, volume, trend })
}

/// Single-stock table around [`generate_sine_noise`]. The market index is an
/// unrelated noiseless cycle at twice the period.
pub fn sine_price_table(config: &SynthConfig, ticker: &str) -> Result<PriceTable, SynthError> {
    let series = generate_sine_noise(config)?;
    if series.price.iter().any(|&p| p <= 0.0) {
        return Err(SynthError::InvalidConfig(
            "noise drove a price non-positive; lower noise_std".into(),
        ));
    }
    let market = (0..config.days)
        .map(|t| config.level_offset + 0.5 * config.amplitude * (PI * t as f64 / config.period).sin())
        .collect();
    let dates = business_days(&config.start_date, config.days)?;
    PriceTable::from_columns(dates, market, vec![(ticker.to_string(), series.price, series.volume)])
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))
}

/// Log level of the market index relative to `ln(level_offset)`.
pub fn market_factor(config: &SynthConfig, t: usize) -> f64 {
    let x = 2.0 * PI * t as f64 / config.period;
    config.amplitude * (0.6 * x.sin() + 0.4 * (x / 0.45 + 1.3).sin())
}

/// Multi-stock market driven by one smooth factor.
///
/// The index is `level_offset · exp(f_t)` for the smooth factor `f_t` of
/// [`market_factor`]. Stock `k` has log price `ln(50) + loading_k · f_t +
/// noise_std · ε_t` with i.i.d. idiosyncratic noise, so its correlation with
/// the market rises with its loading. Volume switches between a quiet and a
/// 2.5× active regime; the active regime coincides with a rising market.
pub fn generate_factor_market(config: &SynthConfig) -> Result<PriceTable, SynthError> {
    config.validate()?;
    let loadings = config.loadings();
    let mut rng = SplitMix64::new(config.seed);
    let factor: Vec<f64> = (0..config.days).map(|t| market_factor(config, t)).collect();
    let market: Vec<f64> = factor.iter().map(|f| config.level_offset * f.exp()).collect();
    let dates = business_days(&config.start_date, config.days)?;
    let mut columns = Vec::with_capacity(loadings.len());
    for (k, &loading) in loadings.iter().enumerate() {
        let mut stock_rng = rng.split(k as u64);
        let mut prices = Vec::with_capacity(config.days);
        let mut volumes = Vec::with_capacity(config.days);
        for t in 0..config.days {
            let noise = config.noise_std * stock_rng.standard_normal();
            prices.push((50f64.ln() + loading * factor[t] + noise).exp());
            let rising = factor[(t + 1).min(config.days - 1)] > factor[t.saturating_sub(1)];
            let regime = if rising { 2.5 } else { 1.0 };
            volumes.push(config.base_volume * regime * (config.volume_jitter * stock_rng.standard_normal()).exp());
        }
        columns.push((format!("S{:02}", k + 1), prices, volumes));
    }
    PriceTable::from_columns(dates, market, columns).map_err(|e| SynthError::InvalidConfig(e.to_string()))
}
