use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Entries with magnitude at or below this count as zero for l0.
pub const L0_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn norms(v: &Tensor) -> Norms {
    let d = v.data();
    Norms {
        l0: d.iter().filter(|x| x.abs() > L0_THRESHOLD).count() as f64,
        l1: d.iter().map(|x| x.abs()).sum(),
        l2: d.iter().map(|x| x * x).sum::<f64>().sqrt(),
        linf: v.max_abs(),
    }
}

/// Percentage of `n` entries touched, rounded to two decimals.
pub fn pixel_fraction(l0: f64, n: usize) -> f64 {
    assert!(n > 0, "pixel_fraction over zero entries");
    (100.0 * l0 / n as f64 * 100.0).round() / 100.0
}
