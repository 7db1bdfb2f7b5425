//! Compares reverse-mode gradients of the attack loss with central
//! differences on the 3×3 two-class linear model.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use autoadversary::attack::{scaled_sigmoid_mask, total_loss, total_loss_grad_delta};
use autoadversary::classifier::ClassifierModel;
use autoadversary::encoder::{init_encoder, EncoderKind, EncoderSpec};
use autoadversary::Tensor;

const H: f64 = 1e-5;

fn main() -> autoadversary::Result<()> {
    for kind in [EncoderKind::FullyConnected, EncoderKind::ConvSmall] {
        for seed in 0..3 {
            let model = ClassifierModel::random_linear_3x3(seed);
            let x = Tensor::from_fn(&[3, 3, 1], |i| 0.1 + 0.09 * i as f64);
            let delta = Tensor::from_fn(&[3, 3, 1], |i| 0.05 * ((i as f64) * 1.7).sin());
            let enc = init_encoder(&EncoderSpec {
                kind,
                input_shape: [3, 3, 1],
                channel_independent: true,
                seed,
            })?;
            let target = 1 - model.predict_class(&x)?;
            let (alpha, lambda) = (0.5, 1.1);
            let loss = |d: &Tensor| -> autoadversary::Result<f64> {
                let m = scaled_sigmoid_mask(&enc.encode(d)?, alpha);
                total_loss(&model, &x, d, &m, target, lambda)
            };
            let (_, grad) = total_loss_grad_delta(&model, &x, &delta, &enc, alpha, target, lambda)?;
            let mut worst = 0.0f64;
            for i in 0..delta.len() {
                let (mut p, mut m) = (delta.clone(), delta.clone());
                p.data_mut()[i] += H;
                m.data_mut()[i] -= H;
                let numeric = (loss(&p)? - loss(&m)?) / (2.0 * H);
                let a = grad.data()[i];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4));
            }
            println!("{:<4} seed {seed}: max relative error {worst:.2e}", kind.name());
        }
    }
    Ok(())
}
