//! Generates the synthetic 16×16 dataset and trains the default CNN.
//!
//! ```text
//! cargo run --release --example train_classifier [out-dir]
//! ```
//! Writes `model.aadv` and `dataset.aadv` into `out-dir` (default `aadv-out`),
//! where the other examples look for them.

use std::path::PathBuf;

use autoadversary::harness::{cmd_train, ExperimentConfig};

fn main() -> autoadversary::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "aadv-out".into()));
    let mut cfg = ExperimentConfig::default();
    cfg.model = out.join("model.aadv");
    cfg.dataset = out.join("dataset.aadv");
    cfg.out = out;

    let summary = cmd_train(&cfg)?;
    for e in &summary.history.epochs {
        println!("epoch {:>2}  loss {:.4}  val {:.3}", e.epoch, e.train_loss, e.val_accuracy);
    }
    println!("validation accuracy {:.3}, checksum {}", summary.val_accuracy, summary.checksum);
    Ok(())
}
