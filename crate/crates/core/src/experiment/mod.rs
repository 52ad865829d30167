//! Config-driven experiments: single runs, seeded sweeps, cost-only grids and
//! the artifacts they leave behind.
//!
//! A run directory holds `history.csv`, `cost.json`, `manifest.json` (the
//! resolved config plus content hashes) and `timing.csv` (host wall time,
//! the only non-deterministic file). A sweep adds `merged.csv`,
//! `summary.csv` and a sweep-level `manifest.json`.

mod config;
mod presets;
mod runner;

pub use config::{
    value_label, BackendKind, CostConfig, DataConfig, DataSource, ExperimentConfig, GridPoint, SweepAxis,
    TopologyConfig, TrainConfig,
};
pub use presets::{preset, preset_names, preset_text};
pub use runner::{
    cost_grid, cost_merged_csv, dataset_digest, history_csv, load_data, merge_dir, run_point, sweep, tail_mean,
    tail_std, write_cost_grid, CostPoint, RunOutput, SweepOptions, SweepOutput,
};

use std::path::Path;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::dataio::DataError;
use crate::hwcost::HwCostError;
use crate::trainers::TrainError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Parse(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Cost(#[from] HwCostError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.display().to_string(), source }
    }
}
