//! Offline pipeline: randomized closed-loop data collection, dataset files,
//! mini-batch training with layer freezing, and held-out evaluation.

mod collect;
mod dataset;
mod eval;
mod train;

pub use collect::{collect, rollout_conditions, run_rollout, CollectConfig, GaitSelection, TargetSource};
pub use dataset::{
    dataset_columns, manifest_path, read_dataset, write_dataset, Dataset, LoadedDataset, Manifest, Record,
    RolloutInfo, Split, DATASET_FORMAT_VERSION,
};
pub use eval::{evaluate_rmse, rmse_with, RmseReport};
pub use train::{fresh_network, train, EpochStats, OptimizerKind, TrainConfig, TrainOutcome};
