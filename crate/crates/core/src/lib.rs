pub mod data;
pub mod fusion;
pub mod hmm;
pub mod linalg;
pub mod lstm;
pub mod rng;
pub mod synth;
pub mod baselines;
pub mod metrics;
pub mod portfolio;
pub mod pipeline;

pub use data::{CsvSchema, NormalizationParams, PriceTable, RollingWindowSet};
pub use fusion::{FusionWeights, StateEncoding};
pub use hmm::{GaussianHmm, RegimeLabel};
pub use lstm::{LstmNetwork, TrainConfig};
pub use metrics::PredictionPanel;
pub use pipeline::{Method, MetricsReport, PipelineError, RunConfig, StockCheckpoint, StockPredictions};
pub use portfolio::{BacktestConfig, BacktestReport, SelectionMode};
pub use synth::SynthConfig;
