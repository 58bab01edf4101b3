//! End-to-end per-stock pipeline: normalize, train the LSTM, fit the HMM
//! and fusion, predict every test window with all methods, then score and
//! backtest the predictions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    fit_autoregressor, fit_linear_or_fallback, predict_full_sequence_baseline, BaselineError, LinearAutoregressor,
    DEFAULT_RIDGE_LAMBDA,
};
use crate::data::{
    load_price_table, make_windows, segment_windows, split_index, training_pairs, CsvSchema, DataError,
    NormalizationParams, PriceTable, RollingWindowSet, DEFAULT_SPLIT_FRACTION, DEFAULT_WINDOW_LENGTH,
};
use crate::fusion::{
    build_dataset, correlation, fit_fusion, refine_prediction, FusionDataset, FusionError, FusionWeights,
    StateEncoding,
};
use crate::hmm::{baum_welch, state_labels, GaussianHmm, HmmError, RegimeLabel, DEFAULT_ITERATIONS, DEFAULT_STATES};
use crate::lstm::{predict_full_sequence, train, LstmError, LstmNetwork, TrainConfig, TrainHistory};
use crate::metrics::{midterm_mean_mpa, mpa_series, trend_accuracy, trend_accuracy_for, MetricsError, PredictionPanel};
use crate::portfolio::{backtest, composite_path, most_correlated, BacktestConfig, BacktestReport, BacktestWindow, PortfolioError};
use crate::rng::SplitMix64;
use crate::synth::{generate_factor_market, sine_price_table, SynthConfig, SynthError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Portfolio(#[from] PortfolioError),
    #[error("stock {ticker}: {source}")]
    Stock {
        ticker: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("inconsistent artifacts: {0}")]
    Artifacts(String),
}

impl PipelineError {
    fn for_stock(self, ticker: &str) -> Self {
        PipelineError::Stock {
            ticker: ticker.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Single sine-plus-noise stock.
    #[default]
    Sine,
    /// Multi-stock factor market.
    FactorMarket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
    Synth {
        #[serde(default)]
        kind: SynthKind,
        #[serde(default)]
        config: SynthConfig,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            kind: SynthKind::Sine,
            config: SynthConfig::default(),
        }
    }
}

/// Second HMM observation dimension.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFeature {
    /// `ln(1 + volume)`.
    #[default]
    Log1p,
    Raw,
}

impl VolumeFeature {
    pub fn apply(self, volume: f64) -> f64 {
        let v = volume.max(0.0);
        match self {
            VolumeFeature::Log1p => v.ln_1p(),
            VolumeFeature::Raw => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmmConfig {
    pub states: usize,
    pub iterations: usize,
    pub volume_feature: VolumeFeature,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            states: DEFAULT_STATES,
            iterations: DEFAULT_ITERATIONS,
            volume_feature: VolumeFeature::Log1p,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub state_encoding: StateEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub ridge_lambda: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortfolioConfig {
    #[serde(flatten)]
    pub backtest: BacktestConfig,
    /// Days at the start of each window taken from the ridge baseline
    /// instead of the Mid-LSTM when building allocation paths.
    pub short_term_days: usize,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self {
            backtest: BacktestConfig::default(),
            short_term_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSource,
    pub window_length: usize,
    pub split_fraction: f64,
    pub lstm: TrainConfig,
    pub hmm: HmmConfig,
    pub fusion: FusionConfig,
    pub baselines: BaselineConfig,
    pub portfolio: PortfolioConfig,
    /// Size of the high-correlation subset used for the HC metrics.
    pub high_correlation_count: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for per-stock jobs; `None` uses all cores.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            window_length: DEFAULT_WINDOW_LENGTH,
            split_fraction: DEFAULT_SPLIT_FRACTION,
            lstm: TrainConfig::default(),
            hmm: HmmConfig::default(),
            fusion: FusionConfig::default(),
            baselines: BaselineConfig::default(),
            portfolio: PortfolioConfig::default(),
            high_correlation_count: 50,
            seed: 0,
            output_dir: PathBuf::from("out"),
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.window_length < 4 {
            return bad("window_length must be at least 4");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie in (0, 1)");
        }
        if self.hmm.states == 0 || self.hmm.iterations == 0 {
            return bad("hmm.states and hmm.iterations must be positive");
        }
        if !(self.baselines.ridge_lambda >= 0.0) {
            return bad("baselines.ridge_lambda must be non-negative");
        }
        if self.portfolio.short_term_days > self.window_length {
            return bad("portfolio.short_term_days exceeds window_length");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be positive");
        }
        self.lstm.validate()?;
        if let DataSource::Synth { config, .. } = &self.data {
            config.validate()?;
        }
        Ok(())
    }
}

pub fn load_data(config: &RunConfig) -> Result<PriceTable> {
    Ok(match &config.data {
        DataSource::Csv { path, schema } => load_price_table(path, schema)?,
        DataSource::Synth { kind: SynthKind::Sine, config } => sine_price_table(config, "SINE")?,
        DataSource::Synth {
            kind: SynthKind::FactorMarket,
            config,
        } => generate_factor_market(config)?,
    })
}

/// Min-max parameters that tolerate a flat training series by mapping it to
/// zero with unit scale.
fn fit_or_unit(series: &[f64]) -> NormalizationParams {
    NormalizationParams::fit(series).unwrap_or_else(|_| {
        let lo = series.first().copied().unwrap_or(0.0);
        NormalizationParams::new(lo, lo + 1.0).expect("unit range is valid")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockNormalization {
    pub price: NormalizationParams,
    pub market: NormalizationParams,
    pub volume: NormalizationParams,
}

/// Everything learned for one stock, saved as `<out>/<ticker>/model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockCheckpoint {
    pub format_version: u32,
    pub ticker: String,
    pub train_config: TrainConfig,
    pub network: LstmNetwork,
    pub history: TrainHistory,
    pub hmm: GaussianHmm,
    pub state_labels: Vec<RegimeLabel>,
    pub fusion: FusionWeights,
    pub linear: LinearAutoregressor,
    pub ridge: LinearAutoregressor,
    pub normalization: StockNormalization,
    /// Price-market correlation over the training portion.
    pub market_correlation: f64,
}

/// Independent reproducible seed for stock `index`.
pub fn stock_seed(master: u64, index: usize) -> u64 {
    use rand::RngCore;
    SplitMix64::new(master).split(index as u64).next_u64()
}

struct Prepared {
    split: usize,
    norm: StockNormalization,
    features: Vec<Vec<f64>>,
    volume: Vec<f64>,
}

fn prepare(table: &PriceTable, stock: usize, config: &RunConfig) -> Result<Prepared> {
    let price = table.close_series(stock);
    let volume = table.volume_series(stock);
    let split = split_index(price.len(), config.split_fraction)?;
    if price.len() < 2 * config.window_length || split <= config.window_length {
        return Err(DataError::SeriesTooShort {
            len: price.len(),
            required: 2 * config.window_length,
        }
        .into());
    }
    let norm = StockNormalization {
        price: NormalizationParams::fit(&price[..split])?,
        market: fit_or_unit(&table.market[..split]),
        volume: fit_or_unit(&volume[..split]),
    };
    let features = (0..price.len())
        .map(|t| {
            vec![
                norm.price.normalize(price[t]),
                norm.market.normalize(table.market[t]),
                norm.volume.normalize(volume[t]),
            ]
        })
        .collect();
    Ok(Prepared {
        split,
        norm,
        features,
        volume,
    })
}

/// Recursive LSTM path over one window, split into (price, market, volume
/// feature) series. Price and market stay normalized.
fn lstm_paths(
    net: &LstmNetwork,
    input: &[Vec<f64>],
    horizon: usize,
    norm: &StockNormalization,
    volume_feature: VolumeFeature,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let path = predict_full_sequence(input, net, horizon)?;
    let price = path.iter().map(|p| p[0]).collect();
    let market = path.iter().map(|p| p[1]).collect();
    let volume = path
        .iter()
        .map(|p| volume_feature.apply(norm.volume.denormalize(p[2])))
        .collect();
    Ok((price, market, volume))
}

/// Train every model for one stock.
pub fn train_stock(table: &PriceTable, stock: usize, config: &RunConfig) -> Result<StockCheckpoint> {
    let ticker = &table.tickers[stock];
    train_stock_inner(table, stock, config).map_err(|e| e.for_stock(ticker))
}

fn train_stock_inner(table: &PriceTable, stock: usize, config: &RunConfig) -> Result<StockCheckpoint> {
    let ticker = table.tickers[stock].clone();
    let w = config.window_length;
    let prep = prepare(table, stock, config)?;
    let (train_set, _) = make_windows(&prep.features, w, config.split_fraction)?;
    let train_config = TrainConfig {
        seed: stock_seed(config.seed, stock),
        ..config.lstm.clone()
    };
    log::info!("{ticker}: training LSTM on {} windows", train_set.windows.len());
    let (network, history) = train(&train_set, &train_config)?;

    let train_features = &prep.features[..prep.split];
    let observations: Vec<Vec<f64>> = (0..prep.split)
        .map(|t| vec![train_features[t][0], config.hmm.volume_feature.apply(prep.volume[t])])
        .collect();
    let sequences: Vec<Vec<Vec<f64>>> = observations.chunks(w).map(<[_]>::to_vec).collect();
    let hmm = baum_welch(&sequences, config.hmm.states, config.hmm.iterations)?.model;
    let labels = if config.hmm.states == 4 {
        state_labels(&hmm)?.labels
    } else {
        Vec::new()
    };

    let mut dataset = FusionDataset::default();
    for window in segment_windows(train_features, w) {
        let (price, market, volume) = lstm_paths(&network, &window.input, w, &prep.norm, config.hmm.volume_feature)?;
        let real: Vec<f64> = window.target.iter().map(|f| f[0]).collect();
        dataset.extend(build_dataset(&price, &market, &volume, &hmm, &real)?);
    }
    let fusion = match fit_fusion(&dataset, config.fusion.state_encoding, config.hmm.states) {
        Ok(weights) => weights,
        Err(FusionError::TooFewRows { rows, coefficients }) => {
            log::warn!("{ticker}: {rows} fusion rows for {coefficients} coefficients; passing LSTM output through");
            FusionWeights::identity(config.fusion.state_encoding, config.hmm.states)
        }
        Err(e) => return Err(e.into()),
    };

    let price_series: Vec<f64> = train_features.iter().map(|f| f[0]).collect();
    let price_set = RollingWindowSet {
        window_length: w,
        windows: training_pairs(&price_series, w),
        test_windows: Vec::new(),
    };
    let linear = fit_linear_or_fallback(&price_set)?;
    let ridge = fit_autoregressor(&price_set, config.baselines.ridge_lambda)?;
    let real_price = table.close_series(stock);
    let market_correlation = correlation(&real_price[..prep.split], &table.market[..prep.split]).unwrap_or(0.0);
    Ok(StockCheckpoint {
        format_version: CHECKPOINT_VERSION,
        ticker,
        train_config,
        network,
        history,
        hmm,
        state_labels: labels,
        fusion,
        linear,
        ridge,
        normalization: prep.norm,
        market_correlation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MidLstm,
    Lstm,
    Linear,
    Ridge,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::MidLstm, Method::Lstm, Method::Linear, Method::Ridge];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::MidLstm => "mid_lstm",
            Method::Lstm => "lstm",
            Method::Linear => "linear",
            Method::Ridge => "ridge",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| PipelineError::Artifacts(format!("unknown method `{s}`")))
    }
}

/// All predictions for one test window of one stock, in price units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    /// 1-based window number.
    pub window: usize,
    /// Absolute day index of the first predicted day.
    pub start_day: usize,
    pub real: Vec<f64>,
    pub paths: BTreeMap<Method, Vec<f64>>,
    /// Viterbi states of the predicted (price, volume) path.
    pub states: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockPredictions {
    pub ticker: String,
    pub market_correlation: f64,
    pub windows: Vec<WindowPrediction>,
}

/// Full-sequence predictions of every method on every test window.
pub fn predict_stock(
    table: &PriceTable,
    stock: usize,
    checkpoint: &StockCheckpoint,
    config: &RunConfig,
) -> Result<StockPredictions> {
    let ticker = &table.tickers[stock];
    predict_stock_inner(table, stock, checkpoint, config).map_err(|e| e.for_stock(ticker))
}

fn predict_stock_inner(
    table: &PriceTable,
    stock: usize,
    checkpoint: &StockCheckpoint,
    config: &RunConfig,
) -> Result<StockPredictions> {
    if checkpoint.ticker != table.tickers[stock] {
        return Err(PipelineError::Artifacts(format!(
            "checkpoint for {} applied to {}",
            checkpoint.ticker, table.tickers[stock]
        )));
    }
    let w = config.window_length;
    let mut prep = prepare(table, stock, config)?;
    // Re-apply the stored parameters so a checkpoint stays authoritative.
    let norm = checkpoint.normalization.clone();
    let price = table.close_series(stock);
    for (t, f) in prep.features.iter_mut().enumerate() {
        f[0] = norm.price.normalize(price[t]);
        f[1] = norm.market.normalize(table.market[t]);
        f[2] = norm.volume.normalize(prep.volume[t]);
    }
    let windows = segment_windows(&prep.features[prep.split..], w);
    let mut out = Vec::with_capacity(windows.len());
    for (k, window) in windows.iter().enumerate() {
        let (p, m, v) = lstm_paths(&checkpoint.network, &window.input, w, &norm, config.hmm.volume_feature)?;
        let real_norm: Vec<f64> = window.target.iter().map(|f| f[0]).collect();
        let data = build_dataset(&p, &m, &v, &checkpoint.hmm, &real_norm)?;
        let mid: Vec<f64> = data.rows.iter().map(|r| refine_prediction(r, &checkpoint.fusion)).collect();
        let price_input: Vec<f64> = window.input.iter().map(|f| f[0]).collect();
        let linear = predict_full_sequence_baseline(&price_input, &checkpoint.linear, w)?;
        let ridge = predict_full_sequence_baseline(&price_input, &checkpoint.ridge, w)?;
        let start_day = prep.split + window.start;
        let mut paths = BTreeMap::new();
        paths.insert(Method::MidLstm, norm.price.denormalize_all(&mid));
        paths.insert(Method::Lstm, norm.price.denormalize_all(&p));
        paths.insert(Method::Linear, norm.price.denormalize_all(&linear));
        paths.insert(Method::Ridge, norm.price.denormalize_all(&ridge));
        out.push(WindowPrediction {
            window: k + 1,
            start_day,
            real: price[start_day..start_day + w].to_vec(),
            paths,
            states: data.rows.iter().map(|r| r.state).collect(),
        });
    }
    Ok(StockPredictions {
        ticker: checkpoint.ticker.clone(),
        market_correlation: checkpoint.market_correlation,
        windows: out,
    })
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.jobs {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
}

/// Train all stocks in a bounded pool; results keep table order.
pub fn train_all(table: &PriceTable, config: &RunConfig) -> Result<Vec<StockCheckpoint>> {
    config.validate()?;
    thread_pool(config)?.install(|| {
        (0..table.n_tickers())
            .into_par_iter()
            .map(|s| train_stock(table, s, config))
            .collect()
    })
}

pub fn predict_all(table: &PriceTable, checkpoints: &[StockCheckpoint], config: &RunConfig) -> Result<Vec<StockPredictions>> {
    if checkpoints.len() != table.n_tickers() {
        return Err(PipelineError::Artifacts(format!(
            "{} checkpoints for {} tickers",
            checkpoints.len(),
            table.n_tickers()
        )));
    }
    thread_pool(config)?.install(|| {
        checkpoints
            .par_iter()
            .enumerate()
            .map(|(s, c)| predict_stock(table, s, c, config))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub midterm_mean_mpa: f64,
    pub trend_accuracy: f64,
    pub hc_midterm_mean_mpa: f64,
    pub hc_trend_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_stocks: usize,
    pub n_windows: usize,
    pub window_length: usize,
    pub high_correlation_tickers: Vec<String>,
    pub methods: BTreeMap<Method, MethodMetrics>,
    /// Per-day MPA series, one per method.
    #[serde(skip)]
    pub mpa_by_day: BTreeMap<Method, Vec<f64>>,
}

/// Day-major panel of one method over a subset of stocks.
pub fn prediction_panel(predictions: &[StockPredictions], stocks: &[usize], method: Method) -> Result<PredictionPanel> {
    let n_windows = predictions[stocks[0]].windows.len();
    if n_windows == 0 {
        return Err(PipelineError::Artifacts("no test windows; lower split_fraction or window_length".into()));
    }
    let w = predictions[stocks[0]].windows[0].real.len();
    let mut real = vec![Vec::with_capacity(stocks.len()); n_windows * w];
    let mut predicted = vec![Vec::with_capacity(stocks.len()); n_windows * w];
    for &s in stocks {
        let windows = &predictions[s].windows;
        if windows.len() != n_windows {
            return Err(PipelineError::Artifacts(format!(
                "{} has {} windows, expected {n_windows}",
                predictions[s].ticker,
                windows.len()
            )));
        }
        for (k, win) in windows.iter().enumerate() {
            let path = win
                .paths
                .get(&method)
                .ok_or_else(|| PipelineError::Artifacts(format!("missing {method} path")))?;
            for d in 0..w {
                real[k * w + d].push(win.real[d]);
                predicted[k * w + d].push(path[d]);
            }
        }
    }
    Ok(PredictionPanel::new(real, predicted, w)?)
}

/// Indices of the stocks most correlated with the market in training.
pub fn high_correlation_stocks(predictions: &[StockPredictions], count: usize) -> Vec<usize> {
    let rho: Vec<f64> = predictions.iter().map(|p| p.market_correlation).collect();
    most_correlated(&rho, count.max(1))
}

pub fn evaluate(predictions: &[StockPredictions], config: &RunConfig) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(PipelineError::Artifacts("no predictions".into()));
    }
    let all: Vec<usize> = (0..predictions.len()).collect();
    let hc = high_correlation_stocks(predictions, config.high_correlation_count);
    let mut methods = BTreeMap::new();
    let mut mpa_by_day = BTreeMap::new();
    for method in Method::ALL {
        let panel = prediction_panel(predictions, &all, method)?;
        let hc_panel = prediction_panel(predictions, &hc, method)?;
        methods.insert(
            method,
            MethodMetrics {
                midterm_mean_mpa: midterm_mean_mpa(&panel),
                trend_accuracy: trend_accuracy(&panel),
                hc_midterm_mean_mpa: midterm_mean_mpa(&hc_panel),
                hc_trend_accuracy: trend_accuracy_for(&hc_panel, &(0..hc.len()).collect::<Vec<_>>()),
            },
        );
        mpa_by_day.insert(method, mpa_series(&panel));
    }
    Ok(MetricsReport {
        n_stocks: predictions.len(),
        n_windows: predictions[0].windows.len(),
        window_length: config.window_length,
        high_correlation_tickers: hc.iter().map(|&i| predictions[i].ticker.clone()).collect(),
        methods,
        mpa_by_day,
    })
}

/// Allocation windows: ridge prices for the short-term days, Mid-LSTM for
/// the rest, scored against realized prices.
pub fn backtest_windows(predictions: &[StockPredictions], config: &RunConfig) -> Result<Vec<BacktestWindow>> {
    let n_windows = predictions.first().map_or(0, |p| p.windows.len());
    (0..n_windows)
        .map(|k| {
            let mut predicted = Vec::with_capacity(predictions.len());
            let mut realized = Vec::with_capacity(predictions.len());
            for p in predictions {
                let win = p
                    .windows
                    .get(k)
                    .ok_or_else(|| PipelineError::Artifacts(format!("{} lacks window {}", p.ticker, k + 1)))?;
                let ridge = &win.paths[&Method::Ridge];
                let mid = &win.paths[&Method::MidLstm];
                let mut path = composite_path(ridge, mid, config.portfolio.short_term_days);
                // Allocation needs positive prices; a path predicted below
                // zero is floored at a tiny positive level.
                path.iter_mut().for_each(|x| *x = x.max(1e-9));
                predicted.push(path);
                realized.push(win.real.clone());
            }
            Ok(BacktestWindow { predicted, realized })
        })
        .collect()
}

pub fn run_backtest(predictions: &[StockPredictions], config: &RunConfig) -> Result<BacktestReport> {
    let tickers: Vec<String> = predictions.iter().map(|p| p.ticker.clone()).collect();
    let rho: Vec<f64> = predictions.iter().map(|p| p.market_correlation).collect();
    let windows = backtest_windows(predictions, config)?;
    Ok(backtest(&tickers, &windows, &rho, &config.portfolio.backtest)?)
}

/// Outputs of a full in-memory run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub table: PriceTable,
    pub checkpoints: Vec<StockCheckpoint>,
    pub predictions: Vec<StockPredictions>,
    pub metrics: MetricsReport,
    pub backtest: BacktestReport,
}

pub fn run_pipeline(config: &RunConfig) -> Result<PipelineRun> {
    config.validate()?;
    let table = load_data(config)?;
    let checkpoints = train_all(&table, config)?;
    let predictions = predict_all(&table, &checkpoints, config)?;
    let metrics = evaluate(&predictions, config)?;
    let backtest = run_backtest(&predictions, config)?;
    Ok(PipelineRun {
        table,
        checkpoints,
        predictions,
        metrics,
        backtest,
    })
}
