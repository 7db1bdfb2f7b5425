//! The full method against the dense, random, l1-on-δ and no-encoder
//! baselines on one image list.
//!
//! ```text
//! cargo run --release --example ablation [model-dir] [images]
//! ```

use std::path::PathBuf;

use autoadversary::harness::{cmd_ablate, ExperimentConfig};

fn main() -> autoadversary::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "aadv-out".into()));
    let mut cfg = ExperimentConfig::default();
    cfg.model = dir.join("model.aadv");
    cfg.dataset = dir.join("dataset.aadv");
    cfg.out = dir.join("example-ablation");
    cfg.count = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());

    let report = cmd_ablate(&cfg)?;
    print!("{}", report.render());
    println!("report written to {}", cfg.out.join("ablate.json").display());
    Ok(())
}
