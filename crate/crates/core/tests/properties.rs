use autoadversary::attack::{alpha_schedule, dynamic_lambda, momentum_grad_update, pgd_step, scaled_sigmoid_mask};
use autoadversary::eval::{norms, pixel_fraction};
use autoadversary::harness::parse_eps;
use autoadversary::Tensor;
use proptest::prelude::*;

fn vec_of(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

proptest! {
    #[test]
    fn pgd_step_stays_in_ball(delta in vec_of(16, -0.1, 0.1), g in vec_of(16, -1.0, 1.0), eps in 0.001f64..0.1) {
        let d = Tensor::new(&[16], delta.iter().map(|v| v.clamp(-eps, eps)).collect()).unwrap();
        let beta = eps / 10.0;
        let out = pgd_step(&d, &Tensor::new(&[16], g).unwrap(), beta, eps).unwrap();
        for (o, i) in out.data().iter().zip(d.data()) {
            prop_assert!(o.abs() <= eps);
            prop_assert!((o - i).abs() <= beta + 1e-15);
        }
    }

    #[test]
    fn alpha_is_monotone_with_exact_ends(start in 0.01f64..1.0, ratio in 1.0f64..1e4, total in 1usize..600) {
        let end = start * ratio;
        prop_assert_eq!(alpha_schedule(0, total, start, end), start);
        prop_assert_eq!(alpha_schedule(total, total, start, end), end);
        let mut prev = start;
        for t in 1..=total {
            let a = alpha_schedule(t, total, start, end);
            prop_assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn lambda_is_bounded(m in vec_of(32, 0.0, 1.0), c in 0.0f64..2.0, gamma in 0.0f64..5.0) {
        let l = dynamic_lambda(&Tensor::new(&[32], m).unwrap(), c, gamma);
        prop_assert!(l >= c && l <= c + gamma);
    }

    #[test]
    fn mask_stays_in_unit_interval(h in vec_of(32, -1e3, 1e3), alpha in 0.1f64..100.0) {
        let m = scaled_sigmoid_mask(&Tensor::new(&[32], h).unwrap(), alpha);
        prop_assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn normalized_gradient_has_unit_l1(grad in vec_of(12, -5.0, 5.0)) {
        let g = Tensor::new(&[12], grad).unwrap();
        prop_assume!(g.data().iter().map(|v| v.abs()).sum::<f64>() > 1e-6);
        let out = momentum_grad_update(&Tensor::zeros(&[12]), &g, 0.0).unwrap();
        let l1: f64 = out.data().iter().map(|v| v.abs()).sum();
        prop_assert!((l1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn norm_ordering(v in vec_of(20, -1.0, 1.0)) {
        let n = norms(&Tensor::new(&[20], v).unwrap());
        prop_assert!(n.l0 <= 20.0);
        prop_assert!(n.linf <= n.l2 + 1e-15 && n.l2 <= n.l1 + 1e-15);
    }

    #[test]
    fn pixel_fraction_is_two_decimal_percent(l0 in 0usize..3072) {
        let p = pixel_fraction(l0 as f64, 3072);
        prop_assert!((0.0..=100.0).contains(&p));
        prop_assert!((p - 100.0 * l0 as f64 / 3072.0).abs() <= 0.005 + 1e-12);
    }

    #[test]
    fn ratio_eps_parses(a in 0u32..=255, b in 255u32..1000) {
        prop_assert_eq!(parse_eps(&format!("{a}/{b}")).unwrap(), a as f64 / b as f64);
    }
}
