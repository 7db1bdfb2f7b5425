//! The frozen target classifier, its toy dataset, training, and file format.

pub mod container;
pub mod dataset;
pub mod model;
pub mod train;

pub use container::{load_dataset, load_model, save_dataset, save_model};
pub use dataset::{generate_synthetic, Dataset, Sample, Split};
pub use model::{BoundModel, ClassifierModel, Layer};
pub use train::{accuracy, train, EpochStats, TrainConfig, TrainHistory};
