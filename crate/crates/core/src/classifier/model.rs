use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

/// One layer of a feedforward classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Flattens its input, then `x · weight + bias`; weight is `[in, out]`.
    Dense { weight: Tensor, bias: Tensor },
    /// `[k, k, c_in, c_out]` kernels plus a per-output-channel bias.
    Conv {
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    Relu,
}

impl Layer {
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::Conv { kernel, bias, .. } => vec![kernel, bias],
            Layer::Relu => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::Conv { kernel, bias, .. } => vec![kernel, bias],
            Layer::Relu => vec![],
        }
    }
}

/// The frozen target model `f: [0,1]^(h×w×c) -> R^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    input_shape: [usize; 3],
    classes: usize,
    layers: Vec<Layer>,
}

/// A model's parameters placed on a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundModel<'m> {
    model: &'m ClassifierModel,
    params: Vec<Var>,
}

impl ClassifierModel {
    /// Validates that the layer stack maps `input_shape` to exactly `classes` logits.
    pub fn new(input_shape: [usize; 3], classes: usize, layers: Vec<Layer>) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        if input_shape.contains(&0) {
            return Err(Error::Config(format!("empty input shape {input_shape:?}")));
        }
        let mut shape = input_shape.to_vec();
        for (i, layer) in layers.iter().enumerate() {
            shape = match layer {
                Layer::Dense { weight, bias } => {
                    let flat: usize = shape.iter().product();
                    match (weight.shape(), bias.shape()) {
                        (&[i_, o], &[ob]) if i_ == flat && o == ob => vec![o],
                        _ => {
                            return Err(Error::dim(
                                "classifier",
                                format!("dense layer {i}: weight {:?}, bias {:?} for input {shape:?}", weight.shape(), bias.shape()),
                            ))
                        }
                    }
                }
                Layer::Conv {
                    kernel,
                    bias,
                    stride,
                    padding,
                } => match (shape.as_slice(), kernel.shape(), bias.shape()) {
                    (&[h, w, c], &[k, k2, ci, co], &[cb]) if k == k2 && ci == c && co == cb && *stride > 0 && h + 2 * padding >= k && w + 2 * padding >= k => {
                        vec![(h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1, co]
                    }
                    _ => {
                        return Err(Error::dim(
                            "classifier",
                            format!("conv layer {i}: kernel {:?} for input {shape:?}", kernel.shape()),
                        ))
                    }
                },
                Layer::Relu => shape,
            };
        }
        if shape.iter().product::<usize>() != classes || shape.len() != 1 {
            return Err(Error::dim(
                "classifier",
                format!("layers produce {shape:?}, expected [{classes}]"),
            ));
        }
        Ok(Self {
            input_shape,
            classes,
            layers,
        })
    }

    /// 16×16×1 input, ten classes: conv(3×3, 8)-relu-conv(3×3, 16)-relu-dense(10),
    /// same padding, He-uniform initialization.
    pub fn default_cnn(seed: u64) -> Self {
        Self::cnn([16, 16, 1], 10, &[8, 16], seed)
    }

    /// Same-padded 3×3 conv stack with relus, then one dense layer.
    pub fn cnn(input_shape: [usize; 3], classes: usize, channels: &[usize], seed: u64) -> Self {
        let mut rng = seed::stream(seed, seed::purpose::MODEL_INIT, 0);
        let [h, w, mut c] = input_shape;
        let mut layers = Vec::new();
        for &co in channels {
            layers.push(Layer::Conv {
                kernel: he_uniform(&mut rng, &[3, 3, c, co], 9 * c),
                bias: Tensor::zeros(&[co]),
                stride: 1,
                padding: 1,
            });
            layers.push(Layer::Relu);
            c = co;
        }
        let flat = h * w * c;
        layers.push(Layer::Dense {
            weight: he_uniform(&mut rng, &[flat, classes], flat),
            bias: Tensor::zeros(&[classes]),
        });
        Self::new(input_shape, classes, layers).expect("construction is shape-consistent")
    }

    /// Single dense layer, no hidden units.
    pub fn linear(input_shape: [usize; 3], weight: Tensor, bias: Tensor) -> Result<Self> {
        let classes = bias.len();
        Self::new(input_shape, classes, vec![Layer::Dense { weight, bias }])
    }

    /// Two-class linear model on 3×3×1 inputs with standard-normal-ish weights
    /// (uniform in [-√3, √3], unit variance) and zero bias.
    pub fn random_linear_3x3(seed: u64) -> Self {
        let mut rng = seed::stream(seed, seed::purpose::MODEL_INIT, 0);
        let a = 3f64.sqrt();
        let weight = Tensor::from_fn(&[9, 2], |_| rng.random_range(-a..=a));
        Self::linear([3, 3, 1], weight, Tensor::zeros(&[2])).expect("shape-consistent")
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(Layer::params)
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Hex SHA-256 over the layer kinds and raw parameter bytes.
    pub fn param_checksum(&self) -> String {
        let mut h = Sha256::new();
        for layer in &self.layers {
            h.update([match layer {
                Layer::Dense { .. } => 0u8,
                Layer::Conv { .. } => 1,
                Layer::Relu => 2,
            }]);
            for p in layer.params() {
                for v in p.data() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Puts the parameters on `g`, as trainable leaves or as constants.
    pub fn bind<'m>(&'m self, g: &mut Graph, trainable: bool) -> BoundModel<'m> {
        let params = self
            .params()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect();
        BoundModel { model: self, params }
    }

    pub fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::dim(
                "classifier",
                format!("image {:?}, model expects {:?}", image.shape(), self.input_shape),
            ));
        }
        Ok(())
    }

    pub fn predict_logits(&self, image: &Tensor) -> Result<Tensor> {
        self.check_input(image)?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(image.clone());
        let logits = bound.forward(&mut g, x)?;
        Ok(g.value(logits).clone())
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn predict_class(&self, image: &Tensor) -> Result<usize> {
        Ok(self.predict_logits(image)?.argmax())
    }
}

impl BoundModel<'_> {
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// Logits as a `[K]` node.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        if g.value(x).shape() != self.model.input_shape {
            return Err(Error::dim(
                "classifier",
                format!("input {:?}, model expects {:?}", g.value(x).shape(), self.model.input_shape),
            ));
        }
        let mut h = x;
        let mut params = self.params.iter().copied();
        for layer in &self.model.layers {
            h = match layer {
                Layer::Dense { weight, .. } => {
                    let (w, b) = (params.next().expect("weight"), params.next().expect("bias"));
                    let flat = g.reshape(h, &[1, weight.shape()[0]])?;
                    let y = g.matmul(flat, w)?;
                    let y = g.add_bias(y, b)?;
                    g.reshape(y, &[weight.shape()[1]])?
                }
                Layer::Conv { stride, padding, .. } => {
                    let (k, b) = (params.next().expect("kernel"), params.next().expect("bias"));
                    let y = g.conv2d(h, k, *stride, *padding)?;
                    g.add_bias(y, b)?
                }
                Layer::Relu => g.relu(h),
            };
        }
        Ok(h)
    }
}

fn he_uniform(rng: &mut Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cnn_shapes() {
        let m = ClassifierModel::default_cnn(1);
        assert_eq!(m.input_shape(), [16, 16, 1]);
        assert_eq!(m.classes(), 10);
        assert_eq!(m.param_count(), 3 * 3 * 8 + 8 + 3 * 3 * 8 * 16 + 16 + 4096 * 10 + 10);
        let logits = m.predict_logits(&Tensor::full(&[16, 16, 1], 0.5)).unwrap();
        assert_eq!(logits.shape(), &[10]);
    }

    #[test]
    fn rejects_bad_stack() {
        let dense = Layer::Dense {
            weight: Tensor::zeros(&[8, 2]),
            bias: Tensor::zeros(&[2]),
        };
        assert!(ClassifierModel::new([3, 3, 1], 2, vec![dense]).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let m = ClassifierModel::linear([3, 3, 1], Tensor::zeros(&[9, 3]), Tensor::zeros(&[3])).unwrap();
        assert_eq!(m.predict_class(&Tensor::full(&[3, 3, 1], 0.3)).unwrap(), 0);
        assert!(m.predict_class(&Tensor::zeros(&[4, 4, 1])).is_err());
    }

    #[test]
    fn checksum_tracks_parameters() {
        let a = ClassifierModel::default_cnn(1);
        let mut b = a.clone();
        assert_eq!(a.param_checksum(), b.param_checksum());
        b.layers_mut()[0].params_mut()[1].data_mut()[0] = 1e-9;
        assert_ne!(a.param_checksum(), b.param_checksum());
    }
}
