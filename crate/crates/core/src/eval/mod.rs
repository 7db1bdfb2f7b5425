//! Metrics, run reports and image dumps.

pub mod norms;
pub mod oracle;
pub mod pnm;
pub mod report;

pub use norms::{norms, pixel_fraction, Norms};
pub use pnm::dump_images;
pub use report::{Aggregate, ImageRecord, Means, RunReport, VariantReport};
