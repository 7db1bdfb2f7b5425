//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as it is evaluated. Nodes are appended
//! in evaluation order, so the node list is always a topological order and
//! [`Graph::backward`] is a single reverse sweep. Graphs are cheap to build and
//! are rebuilt for every optimization step.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    MatMul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    },
    AddBias(Var, Var),
    Reshape(Var),
    BroadcastChannels(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxCrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Elementwise operations exposed through [`Graph::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Scale(f64),
    Relu,
    Sigmoid,
    Abs,
}

/// Numerically stable logistic function, `1 / (1 + e^-z)`.
///
/// Evaluated as `0.5 * (1 + tanh(z / 2))`, which never overflows.
pub fn sigmoid(z: f64) -> f64 {
    0.5 * (1.0 + (0.5 * z).tanh())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node that requires them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A leaf that gradients do not flow into.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.needs(&[a]);
        self.push(op, value, rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let va = self.value(a);
        let vb = self.value(b);
        if va.shape() != vb.shape() {
            return Err(Error::dim(
                name,
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let value = va.zip_map(vb, f)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(op, value, rg))
    }

    pub fn elementwise(&mut self, op: Elementwise, inputs: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::Contract(format!(
                "{op:?} takes {arity} inputs, got {}",
                inputs.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Sub => self.sub(inputs[0], inputs[1]),
            Elementwise::Mul => self.mul(inputs[0], inputs[1]),
            Elementwise::Scale(k) => Ok(self.scale(inputs[0], k)),
            Elementwise::Relu => Ok(self.relu(inputs[0])),
            Elementwise::Sigmoid => Ok(self.sigmoid(inputs[0])),
            Elementwise::Abs => Ok(self.abs(inputs[0])),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Scale(a, k), |x| k * x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), f64::abs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = match (va.shape(), vb.shape()) {
            (&[m, k1], &[k2, n]) if k1 == k2 => (m, k1, n),
            (sa, sb) => {
                return Err(Error::dim("matmul", format!("{sa:?} x {sb:?}")));
            }
        };
        let mut out = vec![0.0; m * n];
        matmul_into(va.data(), vb.data(), &mut out, m, k, n);
        let value = Tensor::new(&[m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Cross-correlation of an `[h, w, c_in]` input with `[k, k, c_in, c_out]`
    /// kernels, zero padding on every side.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.value(input).shape(), self.value(kernel).shape(), stride, padding)?;
        let mut out = vec![0.0; geom.oh * geom.ow * geom.co];
        geom.forward(self.value(input).data(), self.value(kernel).data(), &mut out);
        let value = Tensor::new(&[geom.oh, geom.ow, geom.co], out)?;
        let rg = self.needs(&[input, kernel]);
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            },
            value,
            rg,
        ))
    }

    /// Adds `bias` (length = size of the last axis of `x`) along the last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let vx = self.value(x);
        let vb = self.value(bias);
        let c = *vx.shape().last().expect("tensors have rank >= 1");
        if vb.len() != c {
            return Err(Error::dim(
                "add_bias",
                format!("bias of length {} for last axis {c}", vb.len()),
            ));
        }
        let mut value = vx.clone();
        for chunk in value.data_mut().chunks_mut(c) {
            for (v, b) in chunk.iter_mut().zip(vb.data()) {
                *v += b;
            }
        }
        let rg = self.needs(&[x, bias]);
        Ok(self.push(Op::AddBias(x, bias), value, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(Op::Reshape(a), value, rg))
    }

    /// Repeats an `[h, w, 1]` tensor along the channel axis to `[h, w, channels]`.
    pub fn broadcast_channels(&mut self, a: Var, channels: usize) -> Result<Var> {
        let va = self.value(a);
        let (h, w) = match va.shape() {
            &[h, w, 1] => (h, w),
            s => return Err(Error::dim("broadcast_channels", format!("expected [h, w, 1], got {s:?}"))),
        };
        let mut data = Vec::with_capacity(h * w * channels);
        for &v in va.data() {
            data.extend(std::iter::repeat_n(v, channels));
        }
        let value = Tensor::new(&[h, w, channels], data)?;
        let rg = self.needs(&[a]);
        Ok(self.push(Op::BroadcastChannels(a), value, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(Op::Sum(a), value, rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let value = Tensor::scalar(va.sum() / va.len() as f64);
        let rg = self.needs(&[a]);
        self.push(Op::Mean(a), value, rg)
    }

    /// `-log softmax(logits)[target]`, stabilized by subtracting the max logit.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() < 2 {
            return Err(Error::dim("softmax_cross_entropy", format!("need at least 2 logits, got {}", z.len())));
        }
        if target >= z.len() {
            return Err(Error::Index {
                index: target,
                len: z.len(),
            });
        }
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let loss = total.ln() - (z[target] - max);
        let probs = exps.iter().map(|e| e / total).collect();
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
            rg,
        ))
    }

    /// Reverse sweep from a one-element `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(upstream) = grads[id].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut grads);
            grads[id] = Some(upstream);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, up: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, up.clone());
                self.accumulate(grads, *b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, up.clone());
                if self.wants(*b) {
                    self.accumulate(grads, *b, up.map(|g| -g));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let g = up.zip_map(self.value(*b), |g, y| g * y).expect("shapes checked in forward");
                    self.accumulate(grads, *a, g);
                }
                if self.wants(*b) {
                    let g = up.zip_map(self.value(*a), |g, x| g * x).expect("shapes checked in forward");
                    self.accumulate(grads, *b, g);
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, up.map(|g| g * k)),
            Op::Relu(a) => {
                let g = up
                    .zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })
                    .expect("shapes checked in forward");
                self.accumulate(grads, *a, g);
            }
            Op::Sigmoid(a) => {
                let g = up
                    .zip_map(&node.value, |g, s| g * s * (1.0 - s))
                    .expect("shapes checked in forward");
                self.accumulate(grads, *a, g);
            }
            Op::Abs(a) => {
                let g = up
                    .zip_map(self.value(*a), |g, x| g * sign(x))
                    .expect("shapes checked in forward");
                self.accumulate(grads, *a, g);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if self.wants(*a) {
                    // dA[i, p] = sum_j dC[i, j] * B[p, j]
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let urow = &up.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &vb.data()[p * n..(p + 1) * n];
                            da[i * k + p] = urow.iter().zip(brow).map(|(u, b)| u * b).sum();
                        }
                    }
                    self.accumulate(grads, *a, Tensor::new(&[m, k], da).expect("shape"));
                }
                if self.wants(*b) {
                    // dB[p, j] = sum_i A[i, p] * dC[i, j]
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let urow = &up.data()[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = va.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, u) in db[p * n..(p + 1) * n].iter_mut().zip(urow) {
                                *d += av * u;
                            }
                        }
                    }
                    self.accumulate(grads, *b, Tensor::new(&[k, n], db).expect("shape"));
                }
            }
            Op::Conv2d {
                input,
                kernel,
                stride,
                padding,
            } => {
                let (vi, vk) = (self.value(*input), self.value(*kernel));
                let geom = ConvGeom::new(vi.shape(), vk.shape(), *stride, *padding).expect("validated in forward");
                let want_in = self.wants(*input);
                let want_k = self.wants(*kernel);
                let mut gi = if want_in { vec![0.0; vi.len()] } else { Vec::new() };
                let mut gk = if want_k { vec![0.0; vk.len()] } else { Vec::new() };
                geom.backward(vi.data(), vk.data(), up.data(), want_in.then_some(&mut gi[..]), want_k.then_some(&mut gk[..]));
                if want_in {
                    self.accumulate(grads, *input, Tensor::new(vi.shape(), gi).expect("shape"));
                }
                if want_k {
                    self.accumulate(grads, *kernel, Tensor::new(vk.shape(), gk).expect("shape"));
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, up.clone());
                if self.wants(*bias) {
                    let vb = self.value(*bias);
                    let c = vb.len();
                    let mut gb = vec![0.0; c];
                    for chunk in up.data().chunks(c) {
                        for (g, u) in gb.iter_mut().zip(chunk) {
                            *g += u;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(vb.shape(), gb).expect("shape"));
                }
            }
            Op::Reshape(a) => {
                let g = up.clone().reshape(self.value(*a).shape()).expect("same length");
                self.accumulate(grads, *a, g);
            }
            Op::BroadcastChannels(a) => {
                let c = up.shape()[2];
                let data = up.data().chunks(c).map(|ch| ch.iter().sum()).collect();
                let g = Tensor::new(self.value(*a).shape(), data).expect("shape");
                self.accumulate(grads, *a, g);
            }
            Op::Sum(a) => {
                let g = up.data()[0];
                self.accumulate(grads, *a, Tensor::full(self.value(*a).shape(), g));
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let g = up.data()[0] / va.len() as f64;
                self.accumulate(grads, *a, Tensor::full(va.shape(), g));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let u = up.data()[0];
                let data = probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| u * (p - if i == *target { 1.0 } else { 0.0 }))
                    .collect();
                let g = Tensor::new(self.value(*logits).shape(), data).expect("shape");
                self.accumulate(grads, *logits, g);
            }
        }
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
}

struct ConvGeom {
    h: usize,
    w: usize,
    ci: usize,
    co: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (h, w, ci) = match *input {
            [h, w, c] => (h, w, c),
            _ => return Err(Error::dim("conv2d", format!("input must be [h, w, c], got {input:?}"))),
        };
        let (k, co) = match *kernel {
            [k1, k2, c, co] if k1 == k2 && c == ci => (k1, co),
            _ => {
                return Err(Error::dim(
                    "conv2d",
                    format!("kernel {kernel:?} incompatible with input {input:?}"),
                ))
            }
        };
        if stride == 0 {
            return Err(Error::dim("conv2d", "stride must be positive"));
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(Error::dim(
                "conv2d",
                format!("{k}x{k} kernel does not fit {h}x{w} input with padding {padding}"),
            ));
        }
        Ok(Self {
            h,
            w,
            ci,
            co,
            k,
            stride,
            padding,
            oh: (h + 2 * padding - k) / stride + 1,
            ow: (w + 2 * padding - k) / stride + 1,
        })
    }

    /// Calls `f(out_offset, in_offset, kernel_offset)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let out_off = (oy * self.ow + ox) * self.co;
                for ky in 0..self.k {
                    let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                    if iy < 0 || iy >= self.h as isize {
                        continue;
                    }
                    for kx in 0..self.k {
                        let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                        if ix < 0 || ix >= self.w as isize {
                            continue;
                        }
                        let in_off = (iy as usize * self.w + ix as usize) * self.ci;
                        let k_off = (ky * self.k + kx) * self.ci * self.co;
                        f(out_off, in_off, k_off);
                    }
                }
            }
        }
    }

    fn forward(&self, input: &[f64], kernel: &[f64], out: &mut [f64]) {
        let (ci, co) = (self.ci, self.co);
        self.for_each_tap(|out_off, in_off, k_off| {
            let orow = &mut out[out_off..out_off + co];
            for c in 0..ci {
                let xv = input[in_off + c];
                if xv == 0.0 {
                    continue;
                }
                let krow = &kernel[k_off + c * co..k_off + (c + 1) * co];
                for (o, kv) in orow.iter_mut().zip(krow) {
                    *o += xv * kv;
                }
            }
        });
    }

    fn backward(
        &self,
        input: &[f64],
        kernel: &[f64],
        up: &[f64],
        mut grad_in: Option<&mut [f64]>,
        mut grad_k: Option<&mut [f64]>,
    ) {
        let (ci, co) = (self.ci, self.co);
        self.for_each_tap(|out_off, in_off, k_off| {
            let urow = &up[out_off..out_off + co];
            for c in 0..ci {
                let kr = k_off + c * co..k_off + (c + 1) * co;
                if let Some(gi) = grad_in.as_deref_mut() {
                    gi[in_off + c] += urow.iter().zip(&kernel[kr.clone()]).map(|(u, k)| u * k).sum::<f64>();
                }
                if let Some(gk) = grad_k.as_deref_mut() {
                    let xv = input[in_off + c];
                    if xv != 0.0 {
                        for (g, u) in gk[kr].iter_mut().zip(urow) {
                            *g += xv * u;
                        }
                    }
                }
            }
        });
    }
}
