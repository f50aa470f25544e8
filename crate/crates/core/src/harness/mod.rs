//! Experiment pipeline, low-resource matrices and the human-rating service.

use thiserror::Error;

pub mod config;
pub mod evaluate;
pub mod matrix;
pub mod pipeline;
pub mod rating;
pub mod service;

pub use config::{DataConfig, DecodeConfig, ExperimentConfig, LexMode, ModelConfig, Variant, CONFIG_VERSION};
pub use evaluate::{evaluate_predictions, EvalReport};
pub use matrix::{run_low_resource_matrix, MatrixReport, MatrixRow, MatrixSpec, MatrixTable};
pub use pipeline::{
    prepare_data, run_experiment, run_experiment_with, run_pretrain, Manifest, PreparedData, RunOptions, RunSummary, StageRecord,
};
pub use rating::{
    aggregate, create_rating_tasks, AggregateReport, RatingError, RatingRecord, RatingStore, RatingTask, RatingValue,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Mr(#[from] crate::mr::MrError),
    #[error(transparent)]
    Subword(#[from] crate::subword::SubwordError),
    #[error(transparent)]
    Model(#[from] crate::seq2seq::Seq2SeqError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
