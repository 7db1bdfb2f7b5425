//! Fully connected against convolutional encoders, with per-position or
//! per-channel masks.
//!
//! ```text
//! cargo run --release --example encoder_structures [model-dir] [images]
//! ```

use std::path::PathBuf;

use autoadversary::harness::{cmd_encoders, ExperimentConfig};

fn main() -> autoadversary::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "aadv-out".into()));
    let count = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    for shared in [false, true] {
        let mut cfg = ExperimentConfig::default();
        cfg.model = dir.join("model.aadv");
        cfg.dataset = dir.join("dataset.aadv");
        cfg.out = dir.join(format!("example-encoders-{}", if shared { "shared" } else { "independent" }));
        cfg.count = count;
        cfg.channel_shared = shared;
        cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        println!("channel-shared = {shared}");
        print!("{}", cmd_encoders(&cfg)?.render());
    }
    Ok(())
}
