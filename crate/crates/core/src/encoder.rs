//! The trainable network that maps a perturbation to a same-sized pre-mask.
//!
//! With `channel_independent` unset the encoder emits one map of shape
//! `[h, w, 1]` and the mask is repeated across channels, so every channel at
//! a position is selected together.

use std::path::Path;

use rand::Rng as _;

use crate::autodiff::{Graph, Var};
use crate::classifier::container::{self, PayloadKind, Reader, Writer};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    /// One dense layer, `[N, N_out]` weights plus bias.
    FullyConnected,
    /// conv(3×3, 8)-relu-conv(3×3, c_out), same padding.
    ConvSmall,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::FullyConnected => "fc",
            EncoderKind::ConvSmall => "conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(EncoderKind::FullyConnected),
            "conv" => Ok(EncoderKind::ConvSmall),
            other => Err(Error::Config(format!("unknown encoder {other:?}, expected fc or conv"))),
        }
    }

    /// Fixed factor applied to the perturbation before the first layer.
    ///
    /// Perturbations live at the scale of ε, so an unscaled encoder moves its
    /// pre-mask far too slowly for the mask to saturate by the end of the
    /// schedule. The shared convolution kernels already see the summed
    /// gradient of every position and need much less.
    pub fn input_gain(self) -> f64 {
        match self {
            EncoderKind::FullyConnected => 200.0,
            EncoderKind::ConvSmall => 8.0,
        }
    }
}

const CONV_HIDDEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// `[h, w, c]`
    pub input_shape: [usize; 3],
    pub channel_independent: bool,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn output_channels(&self) -> usize {
        if self.channel_independent {
            self.input_shape[2]
        } else {
            1
        }
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let [h, w, _] = self.input_shape;
        [h, w, self.output_channels()]
    }

    fn param_shapes(&self) -> Vec<(Vec<usize>, usize)> {
        let [h, w, c] = self.input_shape;
        let co = self.output_channels();
        match self.kind {
            EncoderKind::FullyConnected => {
                let (n, n_out) = (h * w * c, h * w * co);
                vec![(vec![n, n_out], n), (vec![n_out], 0)]
            }
            EncoderKind::ConvSmall => vec![
                (vec![3, 3, c, CONV_HIDDEN], 9 * c),
                (vec![CONV_HIDDEN], 0),
                (vec![3, 3, CONV_HIDDEN, co], 9 * CONV_HIDDEN),
                (vec![co], 0),
            ],
        }
    }
}

/// Encoder weights plus their SGD momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    spec: EncoderSpec,
    params: Vec<Tensor>,
    velocity: Vec<Tensor>,
}

/// Weights drawn uniformly from `±1/√fan_in`, biases zero.
pub fn init_encoder(spec: &EncoderSpec) -> Result<EncoderParams> {
    if spec.input_shape.contains(&0) {
        return Err(Error::Config(format!("empty encoder input {:?}", spec.input_shape)));
    }
    let mut rng = seed::stream(spec.seed, seed::purpose::ENCODER, 0);
    let params = spec
        .param_shapes()
        .into_iter()
        .map(|(shape, fan_in)| {
            if fan_in == 0 {
                Tensor::zeros(&shape)
            } else {
                let b = 1.0 / (fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| rng.random_range(-b..=b))
            }
        })
        .collect();
    EncoderParams::with_params(*spec, params)
}

impl EncoderParams {
    /// Explicit parameters (zero velocity); shapes must match the spec.
    pub fn with_params(spec: EncoderSpec, params: Vec<Tensor>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|((s, _), p)| p.shape() != s.as_slice()) {
            return Err(Error::dim(
                "encoder",
                format!(
                    "parameters {:?} do not match {:?}",
                    params.iter().map(Tensor::shape).collect::<Vec<_>>(),
                    shapes.iter().map(|(s, _)| s).collect::<Vec<_>>()
                ),
            ));
        }
        let velocity = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self { spec, params, velocity })
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.param(p.clone())).collect()
    }

    /// Builds `H(delta)` on `g` with the bound parameter leaves.
    /// The result has [`EncoderSpec::output_shape`].
    pub fn encode_on(&self, g: &mut Graph, params: &[Var], delta: Var) -> Result<Var> {
        if g.value(delta).shape() != self.spec.input_shape {
            return Err(Error::dim(
                "encoder",
                format!("perturbation {:?}, encoder expects {:?}", g.value(delta).shape(), self.spec.input_shape),
            ));
        }
        let [h, w, c] = self.spec.input_shape;
        let out = self.spec.output_shape();
        let delta = g.scale(delta, self.spec.kind.input_gain());
        match self.spec.kind {
            EncoderKind::FullyConnected => {
                let flat = g.reshape(delta, &[1, h * w * c])?;
                let y = g.matmul(flat, params[0])?;
                let y = g.add_bias(y, params[1])?;
                g.reshape(y, &out)
            }
            EncoderKind::ConvSmall => {
                let y = g.conv2d(delta, params[0], 1, 1)?;
                let y = g.add_bias(y, params[1])?;
                let y = g.relu(y);
                let y = g.conv2d(y, params[2], 1, 1)?;
                g.add_bias(y, params[3])
            }
        }
    }

    /// Forward-only evaluation of `H(delta)`.
    pub fn encode(&self, delta: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let params: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let d = g.constant(delta.clone());
        let h = self.encode_on(&mut g, &params, d)?;
        Ok(g.value(h).clone())
    }

    /// `v <- momentum * v + grad; p <- p - lr * v` for every parameter.
    pub fn sgd_momentum_step(&mut self, grads: &[Tensor], lr: f64, momentum: f64) -> Result<()> {
        if grads.len() != self.params.len() || grads.iter().zip(&self.params).any(|(g, p)| g.shape() != p.shape()) {
            return Err(Error::dim("sgd_momentum_step", "gradients do not mirror parameters"));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Optimization("non-finite encoder gradient".into()));
        }
        for ((p, v), g) in self.params.iter_mut().zip(&mut self.velocity).zip(grads) {
            for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *vv = momentum * *vv + gv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::header(PayloadKind::Encoder);
        w.u8(match self.spec.kind {
            EncoderKind::FullyConnected => 0,
            EncoderKind::ConvSmall => 1,
        });
        for d in self.spec.input_shape {
            w.u32(d);
        }
        w.u8(self.spec.channel_independent as u8);
        w.u64(self.spec.seed);
        w.u32(self.params.len());
        for p in &self.params {
            w.tensor(p);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, PayloadKind::Encoder)?;
        let kind = match r.u8()? {
            0 => EncoderKind::FullyConnected,
            1 => EncoderKind::ConvSmall,
            k => return Err(r.error(format!("unknown encoder kind {k}"))),
        };
        let input_shape = [r.u32()?, r.u32()?, r.u32()?];
        let channel_independent = r.u8()? != 0;
        let seed = r.u64()?;
        let n = r.u32()?;
        let params = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        r.end()?;
        let spec = EncoderSpec {
            kind,
            input_shape,
            channel_independent,
            seed,
        };
        Self::with_params(spec, params).map_err(|e| Error::Format {
            offset: bytes.len(),
            detail: e.to_string(),
        })
    }

    /// Debug dump in the `AADV` container.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_file(path.as_ref(), &self.to_bytes())
    }
}
