//! Joint training, early stopping, evaluation and checkpoints.

mod config;
mod evaluate;
mod persist;
mod train;

pub use config::{Ablation, ModelKind, TrainConfig, KEYS};
pub use evaluate::{
    evaluate, log_grid, mean_std, metrics_from_logits, run_experiment, sweep, Metrics, RunResult,
    SweepRow,
};
pub use persist::{load_snapshot, save_snapshot, sidecar_path, Sidecar};
pub use train::{
    augmentor_step, gnn_step, init_params, snapshot_logits, train, train_with, AugLosses,
    ClassifierGraph, Context, EarlyStopping, EpochLog, GradientAudit, Snapshot, TrainOutput,
};
