//! Stacked LSTM regressor trained from scratch: gate equations, BPTT,
//! Adam, and recursive full-window prediction.

mod adam;
mod cell;
mod network;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use cell::{cell_forward, CellState, Gate, GateRecord, LstmLayerParams};
pub use network::{Gradients, LstmNetwork, Tape};
pub use train::{dataset_loss, predict_full_sequence, train, TrainConfig, TrainHistory};

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("no training windows")]
    NoWindows,
    #[error("tape does not belong to this network or target length differs")]
    TapeMismatch,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("non-finite parameter or loss")]
    NonFinite,
}
