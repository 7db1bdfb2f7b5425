use crate::encoder::EncoderKind;
use crate::error::{Error, Result};

/// Hyperparameters of the joint perturbation/encoder optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// l∞ radius on the [0, 1] pixel scale.
    pub eps: f64,
    /// Number of optimization steps `T`.
    pub iterations: usize,
    /// Floor `C` of the dynamic sparsity weight.
    pub c_floor: f64,
    /// Range `γ` of the dynamic sparsity weight.
    pub gamma: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    /// Momentum decay of the normalized gradient accumulator.
    pub mu: f64,
    /// Signed step size for the perturbation.
    pub beta: f64,
    pub enc_lr: f64,
    pub enc_momentum: f64,
    pub encoder: EncoderKind,
    pub channel_independent: bool,
    /// A final mask entry counts as binary when `min(m, 1 - m) <= tau_bin`.
    pub tau_bin: f64,
    pub seed: u64,
    /// Keep a per-iteration [`IterationRecord`](super::IterationRecord) trace.
    pub trace: bool,
}

pub const DEFAULT_EPS: f64 = 16.0 / 255.0;

impl Default for AttackConfig {
    fn default() -> Self {
        Self::with_eps(DEFAULT_EPS)
    }
}

impl AttackConfig {
    /// Defaults with the step size tied to the radius (`β = ε / 10`).
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            iterations: 500,
            c_floor: 0.1,
            gamma: 1.0,
            alpha_start: 0.1,
            alpha_end: 100.0,
            mu: 1.0,
            beta: eps / 10.0,
            enc_lr: 0.01,
            enc_momentum: 0.9,
            encoder: EncoderKind::FullyConnected,
            channel_independent: true,
            tau_bin: 1e-3,
            seed: 0,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Config(msg.to_string())) };
        check(self.eps > 0.0 && self.eps <= 1.0, "eps must lie in (0, 1]")?;
        check(self.iterations >= 1, "iterations must be at least 1")?;
        check(self.c_floor > 0.0, "c must be positive")?;
        check(self.gamma > 0.0, "gamma must be positive")?;
        check(
            self.alpha_start > 0.0 && self.alpha_start < self.alpha_end,
            "need 0 < alpha_start < alpha_end",
        )?;
        check(self.beta > 0.0, "beta must be positive")?;
        check(self.mu >= 0.0, "mu must be non-negative")?;
        check(self.enc_lr >= 0.0 && self.enc_momentum >= 0.0, "encoder lr and momentum must be non-negative")?;
        check(self.tau_bin > 0.0 && self.tau_bin < 0.5, "tau_bin must lie in (0, 0.5)")?;
        let finite = [
            self.eps,
            self.c_floor,
            self.gamma,
            self.alpha_start,
            self.alpha_end,
            self.mu,
            self.beta,
            self.enc_lr,
            self.enc_momentum,
        ];
        check(finite.iter().all(|v| v.is_finite()), "hyperparameters must be finite")
    }
}
