//! Sparse targeted adversarial attacks where pixel selection is learned
//! jointly with the perturbation.
//!
//! A trainable encoder maps the current perturbation to a pre-mask, a scaled
//! sigmoid turns that into a nearly binary mask, and the masked perturbation
//! is optimized against a frozen classifier together with the encoder. As the
//! sigmoid scale is annealed the mask becomes binary and only the selected
//! pixels stay perturbed.
//!
//! Modules, bottom-up:
//!
//! - [`tensor`], [`autodiff`]: dense `f64` tensors and reverse-mode gradients.
//! - [`classifier`]: the target model, a procedural toy dataset, training and
//!   the `AADV` binary container.
//! - [`encoder`]: the mask-generating network.
//! - [`attack`]: the joint optimization loop and the ablation baselines.
//! - [`eval`]: norms, run reports, PGM/PPM dumps.
//! - [`harness`]: seeded experiment drivers behind the `aadv` binary.

pub mod attack;
pub mod autodiff;
pub mod classifier;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod harness;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
