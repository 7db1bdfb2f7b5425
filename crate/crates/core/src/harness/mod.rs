//! Experiment driver behind the `aadv` binary: training, attack batches,
//! ablations and reports.

pub mod commands;
pub mod config;

pub use commands::{
    cmd_ablate, cmd_attack, cmd_encoders, cmd_report, cmd_train, image_config, image_list_hash, matched_mask_units,
    run_batch, select_images, Selected, TrainSummary,
};
pub use config::{parse_eps, ExperimentConfig, SEED_ENV};
