//! Training, evaluation and experiment execution.

mod auc;
mod config;
mod experiment;
mod train;

pub use auc::auc;
pub use config::{config_hash, ExperimentConfig, Protocol, ToySettings, TrainConfig};
pub use experiment::{
    aggregate, build_split, default_threads, mean_std, ordered_parallel, run_experiment, run_single, DataSource,
    GroupField, RunRecord, Summary, MAX_RECORDED_OE_INDICES,
};
pub use train::{evaluate, train_model, NetTrainer, ScoreTrainer, TrainReport, TrainedModel};
