//! The joint optimization loop and its ablation variants.
//!
//! Every variant shares one loop: build the mask, form `x + δ ⊙ m`, take the
//! target-class cross-entropy plus an optional sparsity term, then update δ by
//! a momentum-normalized signed step and (for the full method) the encoder by
//! SGD with momentum. Variants differ only in where the mask comes from and
//! which sparsity term is added.

use std::time::Instant;

use rand::seq::index;

use crate::attack::config::AttackConfig;
use crate::attack::steps::{
    alpha_schedule, dynamic_lambda, init_delta, momentum_grad_update, pgd_step, project_to_image_box,
};
use crate::autodiff::{Graph, Var};
use crate::classifier::ClassifierModel;
use crate::encoder::{init_encoder, EncoderParams, EncoderSpec};
use crate::error::{Error, Result};
use crate::eval::norms::{norms, Norms};
use crate::seed;
use crate::tensor::Tensor;

/// Consecutive degenerate-gradient steps tolerated while the target class is
/// not yet predicted.
pub const DEGENERATE_PATIENCE: usize = 50;

/// Perturbation components below this magnitude are zeroed when finalizing
/// the l1-on-δ baseline.
pub const L1_DELTA_ZERO: f64 = 1e-6;

/// The attack method or ablation baseline to run.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    /// Learned encoder mask with the dynamic mask-l1 penalty.
    Full,
    /// All components perturbed, no sparsity term.
    Dense,
    /// A fixed uniformly random set of `k` mask units, no sparsity term.
    Random { k: usize },
    /// No mask, `lambda · mean|δ|` added to the loss.
    L1Delta { lambda: f64 },
    /// Mask `sigmoid(α·δ)` with the dynamic mask-l1 penalty, no encoder.
    NoEncoder,
    /// Dense updates restricted to a given 0/1 mask, no sparsity term.
    Subset { mask: Tensor },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Dense => "dense",
            Variant::Random { .. } => "random",
            Variant::L1Delta { .. } => "l1-delta",
            Variant::NoEncoder => "no-encoder",
            Variant::Subset { .. } => "subset",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum MaskSource {
    Encoder(EncoderParams),
    Direct,
    Fixed(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Sparsity {
    DynamicMask,
    DeltaL1(f64),
    None,
}

/// Per-iteration state of the optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub t: usize,
    pub delta: Tensor,
    /// Accumulated normalized gradient `g_t`.
    pub momentum: Tensor,
    pub alpha: f64,
    pub encoder: Option<EncoderParams>,
    /// Mask used in the most recent step.
    pub mask: Tensor,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub loss: f64,
    /// `‖δ_{t+1}‖∞` after the clipped step.
    pub delta_linf: f64,
    pub mask_min: f64,
    pub mask_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub variant: &'static str,
    pub adversarial: Tensor,
    /// Offset applied to each component; `adversarial = original + perturbation`
    /// up to rounding of the final addition.
    pub perturbation: Tensor,
    /// Mask thresholded at 0.5 (ties round down).
    pub hard_mask: Tensor,
    /// Final soft mask (all ones for the dense-style baselines).
    pub soft_mask: Tensor,
    pub success: bool,
    pub predicted: usize,
    pub norms: Norms,
    pub iterations: usize,
    pub seconds: f64,
    /// Every final mask entry lies within `tau_bin` of 0 or 1.
    pub binarized: bool,
    /// First iteration whose soft-mask forward pass predicted the target.
    pub first_success: Option<usize>,
    pub degenerate_steps: usize,
    pub trace: Vec<IterationRecord>,
}

impl AttackResult {
    pub fn mask_popcount(&self) -> usize {
        self.hard_mask.data().iter().filter(|&&m| m > 0.5).count()
    }
}

/// One attack instance, advanced one iteration at a time.
#[derive(Debug)]
pub struct Attack<'m> {
    model: &'m ClassifierModel,
    x: Tensor,
    target: usize,
    cfg: AttackConfig,
    variant: Variant,
    source: MaskSource,
    sparsity: Sparsity,
    state: AttackState,
    degenerate_streak: usize,
    degenerate_total: usize,
    first_success: Option<usize>,
    trace: Vec<IterationRecord>,
    started: Instant,
}

fn check_image(model: &ClassifierModel, x: &Tensor) -> Result<()> {
    model.check_input(x)?;
    if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Contract("image pixels must lie in [0, 1]".into()));
    }
    Ok(())
}

impl<'m> Attack<'m> {
    pub fn new(model: &'m ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig, variant: Variant) -> Result<Self> {
        let started = Instant::now();
        check_image(model, x)?;
        cfg.validate()?;
        if target >= model.classes() {
            return Err(Error::Index {
                index: target,
                len: model.classes(),
            });
        }
        let current = model.predict_class(x)?;
        if current == target {
            return Err(Error::Contract(format!("image is already classified as target {target}")));
        }
        let shape = x.shape().to_vec();
        let (source, sparsity) = match &variant {
            Variant::Full => {
                let spec = EncoderSpec {
                    kind: cfg.encoder,
                    input_shape: model.input_shape(),
                    channel_independent: cfg.channel_independent,
                    seed: cfg.seed,
                };
                (MaskSource::Encoder(init_encoder(&spec)?), Sparsity::DynamicMask)
            }
            Variant::Dense => (MaskSource::Fixed(Tensor::ones(&shape)), Sparsity::None),
            Variant::Random { k } => (MaskSource::Fixed(random_mask(&shape, *k, cfg)?), Sparsity::None),
            Variant::L1Delta { lambda } => {
                if !(*lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::Config(format!("l1 weight must be non-negative, got {lambda}")));
                }
                (MaskSource::Fixed(Tensor::ones(&shape)), Sparsity::DeltaL1(*lambda))
            }
            Variant::NoEncoder => (MaskSource::Direct, Sparsity::DynamicMask),
            Variant::Subset { mask } => {
                if mask.shape() != x.shape() {
                    return Err(Error::dim("subset mask", format!("{:?} vs image {:?}", mask.shape(), x.shape())));
                }
                if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
                    return Err(Error::Contract("subset mask entries must be 0 or 1".into()));
                }
                (MaskSource::Fixed(mask.clone()), Sparsity::None)
            }
        };

        let delta = project_to_image_box(&init_delta(cfg.eps, &shape, cfg.seed), x)?;
        let mut attack = Self {
            model,
            x: x.clone(),
            target,
            cfg: cfg.clone(),
            variant,
            source,
            sparsity,
            state: AttackState {
                t: 0,
                momentum: Tensor::zeros(&shape),
                alpha: cfg.alpha_start,
                encoder: None,
                mask: Tensor::zeros(&shape),
                lambda: cfg.c_floor,
                delta,
            },
            degenerate_streak: 0,
            degenerate_total: 0,
            first_success: None,
            trace: Vec::new(),
            started,
        };
        attack.state.mask = attack.mask_value(attack.state.alpha)?;
        attack.sync_encoder();
        Ok(attack)
    }

    pub fn state(&self) -> &AttackState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.cfg.iterations
    }

    fn sync_encoder(&mut self) {
        self.state.encoder = match &self.source {
            MaskSource::Encoder(p) => Some(p.clone()),
            _ => None,
        };
    }

    /// Builds the mask node for the current variant.
    fn mask_on(&self, g: &mut Graph, delta: Var, alpha: f64) -> Result<(Var, Vec<Var>)> {
        match &self.source {
            MaskSource::Encoder(enc) => {
                let params = enc.bind(g);
                let h = enc.encode_on(g, &params, delta)?;
                let z = g.scale(h, alpha);
                let mut m = g.sigmoid(z);
                let c = self.x.shape()[2];
                if enc.spec().output_channels() != c {
                    m = g.broadcast_channels(m, c)?;
                }
                Ok((m, params))
            }
            MaskSource::Direct => {
                let z = g.scale(delta, alpha);
                Ok((g.sigmoid(z), Vec::new()))
            }
            MaskSource::Fixed(mask) => Ok((g.constant(mask.clone()), Vec::new())),
        }
    }

    fn mask_value(&self, alpha: f64) -> Result<Tensor> {
        let mut g = Graph::new();
        let d = g.constant(self.state.delta.clone());
        let (m, _) = self.mask_on(&mut g, d, alpha)?;
        Ok(g.value(m).clone())
    }

    /// Runs iteration `t` and returns its record.
    pub fn step(&mut self) -> Result<IterationRecord> {
        if self.is_done() {
            return Err(Error::Contract("attack already ran all iterations".into()));
        }
        let t = self.state.t;
        let alpha = alpha_schedule(t, self.cfg.iterations, self.cfg.alpha_start, self.cfg.alpha_end);

        let mut g = Graph::new();
        let delta = g.param(self.state.delta.clone());
        let (mask, enc_params) = self.mask_on(&mut g, delta, alpha)?;
        let lambda = match self.sparsity {
            Sparsity::DynamicMask => dynamic_lambda(g.value(mask), self.cfg.c_floor, self.cfg.gamma),
            Sparsity::DeltaL1(l) => l,
            Sparsity::None => 0.0,
        };
        let (loss, logits) = build_loss(&mut g, self.model, &self.x, delta, mask, self.target, self.sparsity, lambda)?;
        let loss_value = g.value(loss).item()?;
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("loss {loss_value} at iteration {t}")));
        }
        if self.first_success.is_none() && g.value(logits).argmax() == self.target {
            self.first_success = Some(t);
        }
        let mut grads = g.backward(loss)?;
        let grad_delta = grads.take(delta).unwrap_or_else(|| Tensor::zeros(self.state.delta.shape()));

        self.state.momentum = match momentum_grad_update(&self.state.momentum, &grad_delta, self.cfg.mu) {
            Ok(m) => {
                self.degenerate_streak = 0;
                m
            }
            Err(Error::DegenerateGradient { norm, .. }) => {
                self.degenerate_streak += 1;
                self.degenerate_total += 1;
                if self.degenerate_streak >= DEGENERATE_PATIENCE && g.value(logits).argmax() != self.target {
                    return Err(Error::DegenerateGradient {
                        norm,
                        iterations: self.degenerate_streak,
                    });
                }
                self.state.momentum.map(|v| self.cfg.mu * v)
            }
            Err(e) => return Err(e),
        };
        let stepped = pgd_step(&self.state.delta, &self.state.momentum, self.cfg.beta, self.cfg.eps)?;
        self.state.delta = project_to_image_box(&stepped, &self.x)?;

        if let MaskSource::Encoder(enc) = &mut self.source {
            let enc_grads: Vec<Tensor> = enc_params
                .iter()
                .zip(enc.params())
                .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            enc.sgd_momentum_step(&enc_grads, self.cfg.enc_lr, self.cfg.enc_momentum)?;
        }

        let m = g.value(mask);
        let record = IterationRecord {
            t,
            alpha,
            lambda,
            loss: loss_value,
            delta_linf: self.state.delta.max_abs(),
            mask_min: m.data().iter().cloned().fold(f64::INFINITY, f64::min),
            mask_max: m.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        };
        self.state.mask = m.clone();
        self.state.lambda = lambda;
        self.state.t = t + 1;
        self.state.alpha = alpha_schedule(t + 1, self.cfg.iterations, self.cfg.alpha_start, self.cfg.alpha_end);
        if self.cfg.trace {
            self.trace.push(record);
        }
        Ok(record)
    }

    /// Thresholds the final mask and evaluates the adversarial image.
    pub fn finish(mut self) -> Result<AttackResult> {
        self.sync_encoder();
        let alpha = self.cfg.alpha_end;
        let soft = self.mask_value(alpha)?;
        let mut delta = self.state.delta.clone();
        let mut hard = soft.map(|m| if m > 0.5 { 1.0 } else { 0.0 });
        if let Sparsity::DeltaL1(_) = self.sparsity {
            delta = delta.map(|d| if d.abs() < L1_DELTA_ZERO { 0.0 } else { d });
            hard = delta.map(|d| if d != 0.0 { 1.0 } else { 0.0 });
        }
        let binarized = soft.data().iter().all(|&m| m.min(1.0 - m) <= self.cfg.tau_bin);
        finalize(
            self.model,
            &self.x,
            self.target,
            &delta,
            hard,
            soft,
            Finalize {
                variant: self.variant.name(),
                iterations: self.state.t,
                binarized,
                first_success: self.first_success,
                degenerate_steps: self.degenerate_total,
                trace: self.trace,
                started: self.started,
            },
        )
    }

    /// Runs the remaining iterations and finalizes.
    pub fn run(mut self) -> Result<AttackResult> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }
}

struct Finalize {
    variant: &'static str,
    iterations: usize,
    binarized: bool,
    first_success: Option<usize>,
    degenerate_steps: usize,
    trace: Vec<IterationRecord>,
    started: Instant,
}

fn finalize(
    model: &ClassifierModel,
    x: &Tensor,
    target: usize,
    delta: &Tensor,
    hard: Tensor,
    soft: Tensor,
    meta: Finalize,
) -> Result<AttackResult> {
    let applied = delta.zip_map(&hard, |d, h| d * h)?;
    let perturbation = applied.zip_map(x, |p, xv| p.clamp(-xv, 1.0 - xv))?;
    let adversarial = x.zip_map(&perturbation, |xv, p| (xv + p).clamp(0.0, 1.0))?;
    let predicted = model.predict_class(&adversarial)?;
    Ok(AttackResult {
        variant: meta.variant,
        norms: norms(&perturbation),
        adversarial,
        perturbation,
        hard_mask: hard,
        soft_mask: soft,
        success: predicted == target,
        predicted,
        iterations: meta.iterations,
        seconds: meta.started.elapsed().as_secs_f64(),
        binarized: meta.binarized,
        first_success: meta.first_success,
        degenerate_steps: meta.degenerate_steps,
        trace: meta.trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn build_loss(
    g: &mut Graph,
    model: &ClassifierModel,
    x: &Tensor,
    delta: Var,
    mask: Var,
    target: usize,
    sparsity: Sparsity,
    lambda: f64,
) -> Result<(Var, Var)> {
    let bound = model.bind(g, false);
    let xv = g.constant(x.clone());
    let pruned = g.mul(delta, mask)?;
    let adv = g.add(xv, pruned)?;
    let logits = bound.forward(g, adv)?;
    let ce = g.softmax_cross_entropy(logits, target)?;
    let loss = match sparsity {
        Sparsity::DynamicMask => {
            let mean = g.mean(mask);
            let term = g.scale(mean, lambda);
            g.add(ce, term)?
        }
        Sparsity::DeltaL1(l) => {
            let a = g.abs(delta);
            let mean = g.mean(a);
            let term = g.scale(mean, l);
            g.add(ce, term)?
        }
        Sparsity::None => ce,
    };
    Ok((loss, logits))
}

/// `CE(f(x + δ ⊙ m), target) + λ · ‖m‖₁ / N`.
pub fn total_loss(model: &ClassifierModel, x: &Tensor, delta: &Tensor, mask: &Tensor, target: usize, lambda: f64) -> Result<f64> {
    let mut g = Graph::new();
    let d = g.constant(delta.clone());
    let m = g.constant(mask.clone());
    let (loss, _) = build_loss(&mut g, model, x, d, m, target, Sparsity::DynamicMask, lambda)?;
    g.value(loss).item()
}

/// `∇_δ` of [`total_loss`] where the mask is `sigmoid(α · H(δ))` for a given
/// encoder, with λ held constant. Gradients flow through both `δ ⊙ m` and `m(δ)`.
pub fn total_loss_grad_delta(
    model: &ClassifierModel,
    x: &Tensor,
    delta: &Tensor,
    encoder: &EncoderParams,
    alpha: f64,
    target: usize,
    lambda: f64,
) -> Result<(f64, Tensor)> {
    let mut g = Graph::new();
    let d = g.param(delta.clone());
    let params: Vec<Var> = encoder.params().iter().map(|p| g.constant(p.clone())).collect();
    let h = encoder.encode_on(&mut g, &params, d)?;
    let z = g.scale(h, alpha);
    let mut m = g.sigmoid(z);
    if encoder.spec().output_channels() != x.shape()[2] {
        m = g.broadcast_channels(m, x.shape()[2])?;
    }
    let (loss, _) = build_loss(&mut g, model, x, d, m, target, Sparsity::DynamicMask, lambda)?;
    let grads = g.backward(loss)?;
    Ok((g.value(loss).item()?, grads.get(d).cloned().expect("delta reaches the loss")))
}

fn random_mask(shape: &[usize], k: usize, cfg: &AttackConfig) -> Result<Tensor> {
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let units = if cfg.channel_independent { h * w * c } else { h * w };
    if k > units {
        return Err(Error::Config(format!("cannot select {k} of {units} mask units")));
    }
    let mut rng = seed::stream(cfg.seed, seed::purpose::RANDOM_MASK, 0);
    let mut mask = Tensor::zeros(shape);
    for i in index::sample(&mut rng, units, k) {
        if cfg.channel_independent {
            mask.data_mut()[i] = 1.0;
        } else {
            mask.data_mut()[i * c..(i + 1) * c].fill(1.0);
        }
    }
    Ok(mask)
}

/// Result for a zero radius: nothing can move, so the image is returned as is.
fn empty_result(model: &ClassifierModel, x: &Tensor, target: usize, variant: &Variant) -> Result<AttackResult> {
    let zeros = Tensor::zeros(x.shape());
    finalize(
        model,
        x,
        target,
        &zeros,
        zeros.clone(),
        zeros.clone(),
        Finalize {
            variant: variant.name(),
            iterations: 0,
            binarized: true,
            first_success: None,
            degenerate_steps: 0,
            trace: Vec::new(),
            started: Instant::now(),
        },
    )
}

/// Runs one variant to completion.
pub fn run_variant(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig, variant: Variant) -> Result<AttackResult> {
    if cfg.eps == 0.0 {
        check_image(model, x)?;
        return empty_result(model, x, target, &variant);
    }
    Attack::new(model, x, target, cfg, variant)?.run()
}

/// The full method: learned encoder mask, annealed binarization, dynamic λ.
pub fn run_attack(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::Full)
}

pub fn baseline_dense(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::Dense)
}

pub fn baseline_random(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig, k: usize) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::Random { k })
}

pub fn baseline_l1_delta(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig, lambda: f64) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::L1Delta { lambda })
}

/// Dense attack confined to the components where `mask` is 1.
pub fn baseline_subset(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig, mask: &Tensor) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::Subset { mask: mask.clone() })
}

pub fn baseline_no_encoder(model: &ClassifierModel, x: &Tensor, target: usize, cfg: &AttackConfig) -> Result<AttackResult> {
    run_variant(model, x, target, cfg, Variant::NoEncoder)
}
