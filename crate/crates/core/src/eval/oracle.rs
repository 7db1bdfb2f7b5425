//! Exhaustive minimum-l0 search on tiny models.
//!
//! For an image with `N` components the dense attack is run restricted to
//! each subset of components, smallest subsets first, and the size of the
//! first subset that reaches the target is the minimum. With `N = 9` that is
//! at most 512 runs.

use rand::Rng as _;

use crate::attack::{baseline_subset, AttackConfig};
use crate::classifier::{ClassifierModel, Layer};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Largest component count the exhaustive search accepts.
pub const MAX_COMPONENTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleInstance {
    pub model: ClassifierModel,
    pub image: Tensor,
    pub target: usize,
}

/// Smallest number of components a dense attack needs, or `None` when even
/// the full image fails.
pub fn brute_force_min_l0(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig) -> Result<Option<usize>> {
    let n = x.len();
    if n > MAX_COMPONENTS {
        return Err(Error::Config(format!("exhaustive search over {n} components is too large")));
    }
    let mut subsets: Vec<u32> = (0..1u32 << n).collect();
    subsets.sort_by_key(|s| (s.count_ones(), *s));
    for s in subsets {
        let mask = Tensor::from_fn(x.shape(), |i| f64::from((s >> i) & 1));
        // A subset that leaves every useful component frozen stalls the
        // attack; that is a failure, not an error.
        let success = match baseline_subset(model, x, target, cfg, &mask) {
            Ok(r) => r.success,
            Err(Error::DegenerateGradient { .. }) => false,
            Err(e) => return Err(e),
        };
        if success {
            return Ok(Some(s.count_ones() as usize));
        }
    }
    Ok(None)
}

/// Closed-form minimum for a two-class linear model: each component can move
/// the logit margin by a fixed best amount, so the greedy choice is optimal.
pub fn linear_min_l0(model: &ClassifierModel, x: &Tensor, target: usize, eps: f64) -> Result<Option<usize>> {
    let (weight, bias) = match model.layers() {
        [Layer::Dense { weight, bias }] if model.classes() == 2 => (weight, bias),
        _ => return Err(Error::Config("closed-form oracle needs a single two-class dense layer".into())),
    };
    if target > 1 {
        return Err(Error::Index { index: target, len: 2 });
    }
    let other = 1 - target;
    let w = weight.data();
    let diff: Vec<f64> = (0..x.len()).map(|i| w[i * 2 + target] - w[i * 2 + other]).collect();
    let mut margin = bias.data()[target] - bias.data()[other] + diff.iter().zip(x.data()).map(|(d, v)| d * v).sum::<f64>();
    // argmax breaks ties toward class 0.
    let reached = |m: f64| if target == 0 { m >= 0.0 } else { m > 0.0 };
    let mut gains: Vec<f64> = diff
        .iter()
        .zip(x.data())
        .map(|(&d, &v)| {
            let (lo, hi) = ((-eps).max(-v), eps.min(1.0 - v));
            (d * lo).max(d * hi)
        })
        .collect();
    gains.sort_by(|a, b| b.total_cmp(a));
    for (k, g) in std::iter::once(0.0).chain(gains).enumerate() {
        margin += g;
        if reached(margin) {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Weight multiplier for sampled instances.
///
/// The attack's sparsity penalty per component is `λ/N`, which is 28 times
/// heavier on 9 components than on the 256 of the default classifier. Unit
/// variance weights would leave the penalty dominating the logit gain of a
/// single pixel; this scale restores roughly the gain-to-penalty ratio that
/// the trained 16×16 model shows (mean |∂margin/∂x_i| ≈ 1.9 there).
pub const INSTANCE_WEIGHT_SCALE: f64 = 40.0;

fn scaled_linear(seed: u64) -> ClassifierModel {
    let base = ClassifierModel::random_linear_3x3(seed);
    let [Layer::Dense { weight, bias }] = base.layers() else {
        unreachable!("random_linear_3x3 is a single dense layer")
    };
    ClassifierModel::linear([3, 3, 1], weight.map(|w| w * INSTANCE_WEIGHT_SCALE), bias.clone()).expect("same shapes")
}

/// Draws random two-class 3×3×1 linear instances that a dense attack within
/// `eps` can solve but the clean image does not already satisfy.
pub fn sample_instances(root: u64, count: usize, eps: f64) -> Vec<OracleInstance> {
    let mut out = Vec::with_capacity(count);
    let mut draw = 0u64;
    while out.len() < count {
        let model = scaled_linear(seed::derive(root, seed::purpose::ORACLE, draw));
        let mut rng = seed::stream(root, seed::purpose::ORACLE, draw);
        draw += 1;
        let image = Tensor::from_fn(&[3, 3, 1], |_| rng.random_range(0.0..=1.0));
        let target = 1 - model.predict_class(&image).expect("3x3 input");
        if let Ok(Some(k)) = linear_min_l0(&model, &image, target, eps) {
            if k > 0 {
                out.push(OracleInstance { model, image, target });
            }
        }
    }
    out
}
