//! Runs the full attack on a few validation images and shows how the mask
//! hardens as α grows.
//!
//! ```text
//! cargo run --release --example sparse_attack [model-dir] [images]
//! ```

use std::path::PathBuf;

use autoadversary::attack::{Attack, AttackConfig, Variant};
use autoadversary::classifier::{load_dataset, load_model};
use autoadversary::eval::pixel_fraction;
use autoadversary::harness::{image_config, select_images};

fn main() -> autoadversary::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "aadv-out".into()));
    let count: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let model = load_model(dir.join("model.aadv"))?;
    let ds = load_dataset(dir.join("dataset.aadv"))?;
    let base = AttackConfig::default();

    for s in select_images(&model, &ds, count, 1)? {
        println!("image {} label {} -> target {}", s.id, s.label, s.target);
        let cfg = image_config(&base, 1, s.id);
        let mut attack = Attack::new(&model, &ds.samples[s.id].image, s.target, &cfg, Variant::Full)?;
        while !attack.is_done() {
            let r = attack.step()?;
            if r.t % 100 == 0 || r.t + 1 == cfg.iterations {
                println!(
                    "  t {:>3}  alpha {:>8.3}  lambda {:.3}  loss {:>7.4}  mask [{:.3}, {:.3}]",
                    r.t, r.alpha, r.lambda, r.loss, r.mask_min, r.mask_max
                );
            }
        }
        let r = attack.finish()?;
        println!(
            "  success {}  l0 {}  ({:.2}% of pixels)  linf {:.4}  binarized {}",
            r.success,
            r.norms.l0,
            pixel_fraction(r.norms.l0, r.perturbation.len()),
            r.norms.linf,
            r.binarized
        );
    }
    Ok(())
}
