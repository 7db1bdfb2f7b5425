#![allow(dead_code)]

use autoadversary::attack::{scaled_sigmoid_mask, total_loss, total_loss_grad_delta};
use autoadversary::autodiff::{Graph, Var};
use autoadversary::classifier::ClassifierModel;
use autoadversary::encoder::{init_encoder, EncoderKind, EncoderSpec};
use autoadversary::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

/// Relative error with a small floor, so gradients that are zero up to
/// rounding are compared absolutely.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

/// Uniform in [-2, 2], keeping away from zero so relu and abs kinks are more
/// than `H` from every sample.
pub fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.01..2.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Builds the scalar `f` from the given inputs on a fresh graph.
pub type Build = dyn Fn(&mut Graph, &[Var]) -> Var;

fn eval(inputs: &[Tensor], f: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars);
    g.value(out).item().unwrap()
}

/// Max relative error between backward gradients and central differences
/// over every component of every input.
pub fn check(inputs: &[Tensor], f: &Build) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars);
    let grads = g.backward(out).unwrap();
    let mut worst = 0.0f64;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= H;
            let numeric = (eval(&plus, f) - eval(&minus, f)) / (2.0 * H);
            worst = worst.max(rel_err(analytic.data()[i], numeric));
        }
    }
    worst
}

/// Weighted sum with fixed pseudo-random weights, so every output component
/// carries a distinct gradient.
pub fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let w = random(g.value(v).shape(), seed);
    let w = g.constant(w);
    let p = g.mul(v, w).unwrap();
    g.sum(p)
}

/// One named check per differentiable operation.
pub fn op_checks() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let two = |s| vec![random(&[3, 4], s), random(&[3, 4], s + 1)];
    out.push(("add", check(&two(1), &|g, v| {
        let y = g.add(v[0], v[1]).unwrap();
        project(g, y, 9)
    })));
    out.push(("sub", check(&two(3), &|g, v| {
        let y = g.sub(v[0], v[1]).unwrap();
        project(g, y, 9)
    })));
    out.push(("mul", check(&two(5), &|g, v| {
        let y = g.mul(v[0], v[1]).unwrap();
        project(g, y, 9)
    })));
    out.push(("scale", check(&[random(&[5], 7)], &|g, v| {
        let y = g.scale(v[0], -1.7);
        project(g, y, 9)
    })));
    out.push(("relu", check(&[random(&[12], 8)], &|g, v| {
        let y = g.relu(v[0]);
        project(g, y, 9)
    })));
    out.push(("sigmoid", check(&[random(&[12], 10)], &|g, v| {
        let y = g.sigmoid(v[0]);
        project(g, y, 9)
    })));
    out.push(("abs", check(&[random(&[12], 11)], &|g, v| {
        let y = g.abs(v[0]);
        project(g, y, 9)
    })));
    out.push(("matmul", check(&[random(&[3, 4], 12), random(&[4, 2], 13)], &|g, v| {
        let y = g.matmul(v[0], v[1]).unwrap();
        project(g, y, 9)
    })));
    out.push(("conv2d", check(&[random(&[5, 5, 2], 14), random(&[3, 3, 2, 3], 15)], &|g, v| {
        let y = g.conv2d(v[0], v[1], 1, 1).unwrap();
        project(g, y, 9)
    })));
    out.push(("conv2d-stride2", check(&[random(&[6, 5, 1], 16), random(&[3, 3, 1, 2], 17)], &|g, v| {
        let y = g.conv2d(v[0], v[1], 2, 0).unwrap();
        project(g, y, 9)
    })));
    out.push(("add_bias", check(&[random(&[4, 4, 3], 18), random(&[3], 19)], &|g, v| {
        let y = g.add_bias(v[0], v[1]).unwrap();
        project(g, y, 9)
    })));
    out.push(("reshape", check(&[random(&[2, 6], 20)], &|g, v| {
        let y = g.reshape(v[0], &[3, 4]).unwrap();
        project(g, y, 9)
    })));
    out.push(("broadcast_channels", check(&[random(&[3, 3, 1], 21)], &|g, v| {
        let y = g.broadcast_channels(v[0], 3).unwrap();
        project(g, y, 9)
    })));
    out.push(("sum", check(&[random(&[7], 22)], &|g, v| {
        let s = g.sum(v[0]);
        let s2 = g.mul(s, s).unwrap();
        g.sum(s2)
    })));
    out.push(("mean", check(&[random(&[7], 23)], &|g, v| {
        let s = g.mean(v[0]);
        let s2 = g.mul(s, s).unwrap();
        g.sum(s2)
    })));
    out.push(("softmax_cross_entropy", check(&[random(&[5], 24)], &|g, v| g.softmax_cross_entropy(v[0], 3).unwrap())));
    out.push(("composite", check(&[random(&[2, 3], 25), random(&[3, 2], 26)], &|g, v| {
        let y = g.matmul(v[0], v[1]).unwrap();
        let y = g.scale(y, 0.7);
        let y = g.sigmoid(y);
        project(g, y, 9)
    })));
    out
}

/// The 3×3×1 two-class linear model, an image, and a perturbation inside the box.
pub fn linear_case(seed: u64) -> (ClassifierModel, Tensor, Tensor) {
    let model = ClassifierModel::random_linear_3x3(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_fn(&[3, 3, 1], |_| rng.random_range(0.2..0.8));
    let delta = Tensor::from_fn(&[3, 3, 1], |_| rng.random_range(-0.06..0.06));
    (model, x, delta)
}

/// Max relative error of `∇δ` of the full loss (mask from the encoder,
/// both gradient paths) against central differences.
pub fn full_loss_check(kind: EncoderKind, seed: u64, alpha: f64, lambda: f64) -> f64 {
    let (model, x, delta) = linear_case(seed);
    let enc = init_encoder(&EncoderSpec {
        kind,
        input_shape: [3, 3, 1],
        channel_independent: true,
        seed,
    })
    .unwrap();
    let target = 1 - model.predict_class(&x).unwrap();
    let loss_at = |d: &Tensor| {
        let m = scaled_sigmoid_mask(&enc.encode(d).unwrap(), alpha);
        total_loss(&model, &x, d, &m, target, lambda).unwrap()
    };
    let (value, grad) = total_loss_grad_delta(&model, &x, &delta, &enc, alpha, target, lambda).unwrap();
    assert!((value - loss_at(&delta)).abs() < 1e-12);
    let mut worst = 0.0f64;
    for i in 0..delta.len() {
        let mut p = delta.clone();
        p.data_mut()[i] += H;
        let mut m = delta.clone();
        m.data_mut()[i] -= H;
        let numeric = (loss_at(&p) - loss_at(&m)) / (2.0 * H);
        worst = worst.max(rel_err(grad.data()[i], numeric));
    }
    worst
}
