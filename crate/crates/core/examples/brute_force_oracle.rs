//! Exhaustive minimum-l0 search on tiny linear models, next to what the
//! sparse attack finds.
//!
//! ```text
//! cargo run --release --example brute_force_oracle [instances]
//! ```

use autoadversary::attack::{run_attack, AttackConfig};
use autoadversary::eval::oracle::{brute_force_min_l0, sample_instances};

fn main() -> autoadversary::Result<()> {
    let count = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let cfg = AttackConfig::default();
    let (mut hits, mut near) = (0, 0);
    for (i, inst) in sample_instances(1, count, cfg.eps).iter().enumerate() {
        let min = brute_force_min_l0(&inst.model, &inst.image, inst.target, &cfg)?;
        let r = run_attack(&inst.model, &inst.image, inst.target, &AttackConfig { seed: i as u64, ..cfg.clone() })?;
        let min = min.expect("sampled instances are solvable");
        hits += usize::from(r.success);
        near += usize::from(r.success && r.norms.l0 <= (min + 2) as f64);
        println!("instance {i:>2}: minimum {min}, attack {} ({})", r.norms.l0, if r.success { "ok" } else { "failed" });
    }
    println!("{hits}/{count} succeeded, {near} within two of the minimum");
    Ok(())
}
