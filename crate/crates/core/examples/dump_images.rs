//! Attacks one validation image and writes the original, adversarial,
//! difference and mask images as PGM/PPM.
//!
//! ```text
//! cargo run --release --example dump_images [model-dir] [out-dir]
//! ```

use std::path::PathBuf;

use autoadversary::attack::{run_attack, AttackConfig};
use autoadversary::classifier::{load_dataset, load_model};
use autoadversary::eval::dump_images;
use autoadversary::harness::{image_config, select_images};

fn main() -> autoadversary::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "aadv-out".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "aadv-out/example-images".into()));
    let model = load_model(dir.join("model.aadv"))?;
    let ds = load_dataset(dir.join("dataset.aadv"))?;

    let s = select_images(&model, &ds, 1, 1)?[0];
    let x = &ds.samples[s.id].image;
    let r = run_attack(&model, x, s.target, &image_config(&AttackConfig::default(), 1, s.id))?;
    println!("image {} -> target {}: success {}, l0 {}", s.id, s.target, r.success, r.norms.l0);
    for path in dump_images(x, &r.adversarial, &r.hard_mask, out.join(format!("image-{:05}", s.id)))? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
