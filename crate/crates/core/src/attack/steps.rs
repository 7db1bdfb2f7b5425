//! The individual update rules of the attack loop, as pure functions.

use rand::Rng as _;

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// Gradient l1 norms below this are treated as zero.
pub const DEGENERATE_GRAD_L1: f64 = 1e-12;

/// Components i.i.d. uniform on `[-eps, eps]`.
pub fn init_delta(eps: f64, shape: &[usize], seed: u64) -> Tensor {
    let mut rng = seed::stream(seed, seed::purpose::DELTA, 0);
    Tensor::from_fn(shape, |_| if eps > 0.0 { rng.random_range(-eps..=eps) } else { 0.0 })
}

/// `sigmoid(alpha * h)` elementwise.
pub fn scaled_sigmoid_mask(pre_mask: &Tensor, alpha: f64) -> Tensor {
    pre_mask.map(|h| sigmoid(alpha * h))
}

/// `C + γ/N · #{i : m_i > 0.5}`. Entries equal to 0.5 do not count.
pub fn dynamic_lambda(mask: &Tensor, c_floor: f64, gamma: f64) -> f64 {
    let active = mask.data().iter().filter(|&&m| m > 0.5).count();
    c_floor + gamma * active as f64 / mask.len() as f64
}

/// `g' = μ·g + ∇/‖∇‖₁`.
///
/// Fails with [`Error::DegenerateGradient`] when `‖∇‖₁` is below
/// [`DEGENERATE_GRAD_L1`]; callers then fall back to `μ·g`.
pub fn momentum_grad_update(g: &Tensor, grad: &Tensor, mu: f64) -> Result<Tensor> {
    g.expect_same_shape("momentum_grad_update", grad)?;
    let l1: f64 = grad.data().iter().map(|v| v.abs()).sum();
    if !l1.is_finite() {
        return Err(Error::Numeric(format!("gradient l1 norm {l1}")));
    }
    if l1 < DEGENERATE_GRAD_L1 {
        return Err(Error::DegenerateGradient { norm: l1, iterations: 1 });
    }
    g.zip_map(grad, |gv, d| mu * gv + d / l1)
}

/// Descent step `clip_eps(delta - beta * sign(g))`, with `sign(0) = 0`.
pub fn pgd_step(delta: &Tensor, g: &Tensor, beta: f64, eps: f64) -> Result<Tensor> {
    delta.zip_map(g, |d, gv| {
        let s = if gv > 0.0 {
            1.0
        } else if gv < 0.0 {
            -1.0
        } else {
            0.0
        };
        (d - beta * s).clamp(-eps, eps)
    })
}

/// Clips `delta` so that `x + delta` stays inside `[0, 1]`.
///
/// Every mask value lies in `[0, 1]`, so `x + delta ⊙ m` is then a convex
/// combination of two valid images and never leaves the classifier's domain.
pub fn project_to_image_box(delta: &Tensor, x: &Tensor) -> Result<Tensor> {
    delta.zip_map(x, |d, xv| d.clamp(-xv, 1.0 - xv))
}

/// Geometric interpolation `α_start · (α_end/α_start)^(t/T)`, exact at both ends.
pub fn alpha_schedule(t: usize, total: usize, alpha_start: f64, alpha_end: f64) -> f64 {
    if t == 0 || total == 0 {
        return alpha_start;
    }
    if t >= total {
        return alpha_end;
    }
    alpha_start * (alpha_end / alpha_start).powf(t as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64]) -> Tensor {
        Tensor::new(&[data.len()], data.to_vec()).unwrap()
    }

    #[test]
    fn init_delta_within_ball_and_seeded() {
        let eps = 8.0 / 255.0;
        let d = init_delta(eps, &[16, 16, 1], 3);
        assert!(d.max_abs() <= eps);
        assert_eq!(d, init_delta(eps, &[16, 16, 1], 3));
        assert_ne!(d, init_delta(eps, &[16, 16, 1], 4));
    }

    #[test]
    fn init_delta_mean_is_centred() {
        let eps = 0.25;
        let n = 100_000;
        let d = init_delta(eps, &[n], 11);
        let mean = d.sum() / n as f64;
        // Uniform on [-eps, eps] has standard deviation eps/√3.
        let sigma = eps / 3f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean}, 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn mask_values() {
        let m = scaled_sigmoid_mask(&Tensor::zeros(&[4]), 37.0);
        assert!(m.data().iter().all(|&v| v == 0.5));
        let hi = scaled_sigmoid_mask(&t(&[0.1]), 100.0).data()[0];
        assert!((hi - 1.0 / (1.0 + (-10f64).exp())).abs() < 1e-15);
        assert!((hi - 0.9999546).abs() < 1e-7);
        let lo = scaled_sigmoid_mask(&t(&[0.1]), 0.1).data()[0];
        assert!((lo - 0.5025).abs() < 1e-5);
    }

    #[test]
    fn lambda_counts_strictly_above_half() {
        let (c, g) = (0.1, 1.0);
        assert_eq!(dynamic_lambda(&Tensor::full(&[6], 0.1), c, g), c);
        assert_eq!(dynamic_lambda(&Tensor::full(&[6], 0.9), c, g), c + g);
        assert_eq!(dynamic_lambda(&t(&[0.6, 0.4, 0.51, 0.5]), c, g), c + g * 2.0 / 4.0);
    }

    #[test]
    fn momentum_update_rules() {
        let grad = t(&[0.3, -0.1, 0.0, 0.6]);
        let g1 = momentum_grad_update(&Tensor::zeros(&[4]), &grad, 1.0).unwrap();
        assert!((g1.data().iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-15);
        let g2 = momentum_grad_update(&t(&[5.0, 5.0, 5.0, 5.0]), &grad, 0.0).unwrap();
        assert_eq!(g2, g1);
        // Constant positive direction with μ = 1 telescopes to ‖g_t‖₁ = t.
        let dir = t(&[0.2, 0.7, 1.1, 0.05]);
        let mut g = Tensor::zeros(&[4]);
        for step in 1..=7 {
            g = momentum_grad_update(&g, &dir, 1.0).unwrap();
            let l1: f64 = g.data().iter().map(|v| v.abs()).sum();
            assert!((l1 - step as f64).abs() < 1e-12);
        }
        assert!(matches!(
            momentum_grad_update(&g, &Tensor::zeros(&[4]), 1.0),
            Err(Error::DegenerateGradient { .. })
        ));
    }

    #[test]
    fn pgd_step_cases() {
        let eps = 0.1;
        let d = t(&[0.05, -0.02, 0.1]);
        assert_eq!(pgd_step(&d, &Tensor::zeros(&[3]), 0.01, eps).unwrap(), d);
        // At +eps, a negative g would push up; the clip holds it at eps.
        let up = pgd_step(&t(&[eps]), &t(&[-3.0]), 0.02, eps).unwrap();
        assert_eq!(up.data(), &[eps]);
        let down = pgd_step(&Tensor::zeros(&[3]), &t(&[1.0, 2.0, 0.5]), eps / 4.0, eps).unwrap();
        assert!(down.data().iter().all(|&v| v == -eps / 4.0));
    }

    #[test]
    fn image_box_projection() {
        let x = t(&[0.0, 1.0, 0.5]);
        let p = project_to_image_box(&t(&[-0.1, 0.1, -0.1]), &x).unwrap();
        assert_eq!(p.data(), &[0.0, 0.0, -0.1]);
    }

    #[test]
    fn alpha_endpoints_and_midpoint() {
        assert_eq!(alpha_schedule(0, 500, 0.1, 100.0), 0.1);
        assert_eq!(alpha_schedule(500, 500, 0.1, 100.0), 100.0);
        let mid = alpha_schedule(250, 500, 0.1, 100.0);
        assert!((mid - 10f64.sqrt()).abs() < 1e-12);
        let mut prev = 0.0;
        for s in 0..=500 {
            let a = alpha_schedule(s, 500, 0.1, 100.0);
            assert!(a >= prev);
            prev = a;
        }
    }
}
