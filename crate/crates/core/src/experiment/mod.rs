//! Training, evaluation and the training-size sweep.

mod config;
mod run;
mod sweep;
mod train;

pub use config::{config_help, DataConfig, ExperimentConfig, ModelConfig, SweepConfig, TrainConfig, CONFIG_KEYS};
pub use run::{
    base_split, build_model, checkpoint, dataset, evaluate, fusion_operator, load_dataset, log_text, preprocess,
    probe_text, restore, run, run_split, ExperimentRecord, RunOutcome,
};
pub use sweep::{
    median, read_csv, results_table, run_cell, run_sweep, sweep_cells, write_csv, write_sweep, Cell, CellResult,
    ResultRow, SweepOutcome, CELLS_TXT, FAILURES_TXT, RESULTS_CSV, RESULTS_TXT, TIMING_TXT,
};
pub use train::{score_subject, subject_dice, train, EpochRecord, Subject, TrainOutcome, TrainSettings};

use crate::data::DataError;
use crate::metrics::MetricError;
use crate::models::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("subject: {0}")]
    Subject(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("checkpoint was written under config {checkpoint}, current config hashes to {config}")]
    HashMismatch { checkpoint: String, config: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
