//! Reverse-mode automatic differentiation on a tape.
//!
//! A [`Graph`] records every operation as a node. Nodes are appended in
//! evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] simply walks it in reverse. Parameters are borrowed
//! into the tape (`Graph::param`) instead of copied; the lifetime `'p` ties
//! the tape to the parameter store it reads from.
//!
//! Gradients are only propagated into nodes that require them. A leaf
//! requires gradients when created that way; any other node requires them
//! when one of its inputs does. Kernels skip the work for inputs that do not.

mod kernels;

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub(crate) use kernels::gemm;
use kernels::{col2im, gemm_new, im2col, ConvGeom};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'p> {
    Owned(Vec<f64>),
    Borrowed(&'p [f64]),
}

impl Value<'_> {
    fn as_slice(&self) -> &[f64] {
        match self {
            Value::Owned(v) => v,
            Value::Borrowed(s) => s,
        }
    }
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Tanh {
        x: Var,
    },
    Softmax {
        x: Var,
    },
    ResizeNearest {
        x: Var,
    },
    AvgPool2 {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    AddScalar {
        x: Var,
    },
    MulConst {
        x: Var,
        weights: Vec<f64>,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    LogClamped {
        x: Var,
        floor: f64,
    },
    Sum {
        x: Var,
    },
    Mix {
        a: Var,
        b: Var,
        mask: Vec<f64>,
    },
}

struct Node<'p> {
    shape: Vec<usize>,
    value: Value<'p>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Computation record for one forward pass.
#[derive(Default)]
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
}

fn chw(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::invalid(
            op,
            alloc::format!("expected a C×H×W tensor, got shape {:?}", shape),
        )),
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            value: Value::Owned(data),
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Leaf that receives gradients.
    pub fn variable(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, true)
    }

    /// Borrowed leaf; no copy of the parameter data is made.
    pub fn param(&mut self, t: &'p Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: Value::Borrowed(t.data()),
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.as_slice()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of `v`, present after a backward pass that reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ---- operations -------------------------------------------------------

    /// 2-D cross-correlation of a C_in×H×W input with a C_out×C_in×k×k weight.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let (c_in, h, w) = chw(self.shape(input), "conv2d")?;
        let ws = self.shape(weight).to_vec();
        let [c_out, wc_in, k, k2] = ws[..] else {
            return Err(Error::shape("conv2d", self.shape(input), &ws));
        };
        if wc_in != c_in || k != k2 {
            return Err(Error::shape("conv2d", self.shape(input), &ws));
        }
        if k % 2 == 0 {
            return Err(Error::invalid("conv2d", "kernel extent must be odd"));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be at least 1"));
        }
        if self.shape(bias) != [c_out] {
            return Err(Error::shape("conv2d", &ws, self.shape(bias)));
        }
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        if ph < k || pw < k || (ph - k) % stride != 0 || (pw - k) % stride != 0 {
            return Err(Error::invalid(
                "conv2d",
                alloc::format!(
                    "output extent not integral for input {:?}, kernel {}, stride {}, padding {}",
                    self.shape(input),
                    k,
                    stride,
                    pad
                ),
            ));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            k,
            stride,
            pad,
            out_h: (ph - k) / stride + 1,
            out_w: (pw - k) / stride + 1,
        };
        let p = geom.cols();
        let mut out = {
            let x = self.value(input);
            let wv = self.value(weight);
            let q = geom.rows();
            if geom.is_pointwise() {
                gemm_new(c_out, q, p, wv, (q, 1), x, (p, 1))
            } else {
                let cols = im2col(x, &geom);
                gemm_new(c_out, q, p, wv, (q, 1), &cols, (p, 1))
            }
        };
        for (row, &b) in out.chunks_exact_mut(p).zip(self.value(bias)) {
            row.iter_mut().for_each(|v| *v += b);
        }
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            vec![c_out, geom.out_h, geom.out_w],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// `x` for `x ≥ 0`, `slope·x` otherwise. The derivative at 0 is taken as 1.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self
            .value(x)
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).iter().map(|&v| math::tanh(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Tanh { x }, rg)
    }

    /// Softmax over the channel axis of a C×H×W tensor, per pixel.
    pub fn channel_softmax(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = chw(self.shape(x), "channel_softmax")?;
        if c == 0 {
            return Err(Error::invalid(
                "channel_softmax",
                "needs at least one channel",
            ));
        }
        let plane = h * w;
        let xv = self.value(x);
        let mut out = vec![0.0; c * plane];
        for p in 0..plane {
            let mut max = f64::NEG_INFINITY;
            for ch in 0..c {
                max = max.max(xv[ch * plane + p]);
            }
            let mut total = 0.0;
            for ch in 0..c {
                let e = math::exp(xv[ch * plane + p] - max);
                out[ch * plane + p] = e;
                total += e;
            }
            for ch in 0..c {
                out[ch * plane + p] /= total;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, h, w], out, Op::Softmax { x }, rg))
    }

    /// Nearest-neighbour resampling; source index is `floor(i·H/H')`.
    pub fn resize_nearest(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (c, h, w) = chw(self.shape(x), "resize_nearest")?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::invalid(
                "resize_nearest",
                "target extents must be positive",
            ));
        }
        let xv = self.value(x);
        let mut out = vec![0.0; c * out_h * out_w];
        for ch in 0..c {
            for i in 0..out_h {
                let si = i * h / out_h;
                for j in 0..out_w {
                    let sj = j * w / out_w;
                    out[(ch * out_h + i) * out_w + j] = xv[(ch * h + si) * w + sj];
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, out_h, out_w], out, Op::ResizeNearest { x }, rg))
    }

    /// 2×2 mean pooling; both extents must be even.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = chw(self.shape(x), "avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid(
                "avg_pool2",
                alloc::format!("extents must be even, got {}×{}", h, w),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x);
        let mut out = vec![0.0; c * oh * ow];
        for ch in 0..c {
            for i in 0..oh {
                let r0 = (ch * h + 2 * i) * w;
                let r1 = r0 + w;
                for j in 0..ow {
                    out[(ch * oh + i) * ow + j] = 0.25
                        * (xv[r0 + 2 * j]
                            + xv[r0 + 2 * j + 1]
                            + xv[r1 + 2 * j]
                            + xv[r1 + 2 * j + 1]);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, oh, ow], out, Op::AvgPool2 { x }, rg))
    }

    /// Channel concatenation, `a` first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = chw(self.shape(a), "concat_channels")?;
        let (cb, hb, wb) = chw(self.shape(b), "concat_channels")?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::shape(
                "concat_channels",
                self.shape(a),
                self.shape(b),
            ));
        }
        let mut out = Vec::with_capacity((ca + cb) * ha * wa);
        out.extend_from_slice(self.value(a));
        out.extend_from_slice(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![ca + cb, ha, wa], out, Op::Concat { a, b }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x - y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Sub { a, b }, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).iter().map(|v| v * factor).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Scale { x, factor }, rg)
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Var {
        let out = self.value(x).iter().map(|v| v + offset).collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::AddScalar { x }, rg)
    }

    /// Elementwise product with a constant weight buffer of the same length.
    pub fn mul_const(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::shape("mul_const", self.shape(x), &[weights.len()]));
        }
        let out = self
            .value(x)
            .iter()
            .zip(&weights)
            .map(|(a, b)| a * b)
            .collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, Op::MulConst { x, weights }, rg))
    }

    /// Per-channel normalization over spatial positions:
    /// `(x − mean) / sqrt(var + eps)` with the biased variance.
    pub fn instance_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let (c, h, w) = chw(self.shape(x), "instance_norm")?;
        let plane = h * w;
        let xv = self.value(x);
        let mut out = vec![0.0; c * plane];
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let src = &xv[ch * plane..(ch + 1) * plane];
            let mean = src.iter().sum::<f64>() / plane as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
            let s = 1.0 / math::sqrt(var + eps);
            inv_std[ch] = s;
            for (o, v) in out[ch * plane..(ch + 1) * plane].iter_mut().zip(src) {
                *o = (v - mean) * s;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![c, h, w], out, Op::InstanceNorm { x, inv_std }, rg))
    }

    /// `ln(max(x, floor))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Var {
        let out = self
            .value(x)
            .iter()
            .map(|&v| math::ln(v.max(floor)))
            .collect();
        let rg = self.rg(x);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::LogClamped { x, floor }, rg)
    }

    /// Sum of all elements as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().sum();
        let rg = self.rg(x);
        self.push(Vec::new(), vec![total], Op::Sum { x }, rg)
    }

    /// `M ⊙ a + (1 − M) ⊙ b` with an H×W mask broadcast over channels.
    pub fn mix(&mut self, a: Var, b: Var, mask: &[f64]) -> Result<Var> {
        self.same_shape(a, b, "mix")?;
        let (c, h, w) = chw(self.shape(a), "mix")?;
        if mask.len() != h * w {
            return Err(Error::shape("mix", self.shape(a), &[mask.len()]));
        }
        let plane = h * w;
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; c * plane];
        for ch in 0..c {
            for p in 0..plane {
                let i = ch * plane + p;
                let m = mask[p];
                out[i] = m * av[i] + (1.0 - m) * bv[i];
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            vec![c, h, w],
            out,
            Op::Mix {
                a,
                b,
                mask: mask.to_vec(),
            },
            rg,
        ))
    }

    // ---- backward ---------------------------------------------------------

    /// Accumulates d(loss)/d(node) into every node that requires gradients.
    ///
    /// Calling it again without [`zero_grad`](Self::zero_grad) adds a second
    /// copy of the gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..n).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &dy, &mut grads);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(g) => g.iter_mut().zip(&dy).for_each(|(a, b)| *a += b),
                None => node.grad = Some(dy),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.as_slice();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let c_out = node.shape[0];
                let p = geom.cols();
                let q = geom.rows();
                let x = self.value(*input);
                let wv = self.value(*weight);
                if self.rg(*bias) {
                    let db = accumulate(grads, *bias, c_out);
                    for (co, row) in dy.chunks_exact(p).enumerate() {
                        db[co] += row.iter().sum::<f64>();
                    }
                }
                let owned_cols;
                let cols: &[f64] = if geom.is_pointwise() {
                    x
                } else if self.rg(*weight) {
                    owned_cols = im2col(x, geom);
                    &owned_cols
                } else {
                    &[]
                };
                if self.rg(*weight) {
                    let dw = accumulate(grads, *weight, c_out * q);
                    // dW (c_out×q) += dY (c_out×p) · colsᵀ (p×q)
                    gemm(c_out, p, q, dy, (p, 1), cols, (1, p), 1.0, dw);
                }
                if self.rg(*input) {
                    let len = geom.c_in * geom.h * geom.w;
                    if geom.is_pointwise() {
                        let dx = accumulate(grads, *input, len);
                        gemm(q, c_out, p, wv, (1, q), dy, (p, 1), 1.0, dx);
                    } else {
                        // dcols (q×p) = Wᵀ (q×c_out) · dY (c_out×p)
                        let dcols = gemm_new(q, c_out, p, wv, (1, q), dy, (p, 1));
                        let dx = accumulate(grads, *input, len);
                        col2im(&dcols, geom, dx);
                    }
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x);
                let dx = accumulate(grads, *x, dy.len());
                for i in 0..dy.len() {
                    dx[i] += if xv[i] >= 0.0 { dy[i] } else { slope * dy[i] };
                }
            }
            Op::Tanh { x } => {
                let dx = accumulate(grads, *x, dy.len());
                for i in 0..dy.len() {
                    dx[i] += dy[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Softmax { x } => {
                let c = node.shape[0];
                let plane = node.shape[1] * node.shape[2];
                let dx = accumulate(grads, *x, dy.len());
                for p in 0..plane {
                    let mut dot = 0.0;
                    for ch in 0..c {
                        dot += y[ch * plane + p] * dy[ch * plane + p];
                    }
                    for ch in 0..c {
                        let i = ch * plane + p;
                        dx[i] += y[i] * (dy[i] - dot);
                    }
                }
            }
            Op::ResizeNearest { x } => {
                let (c, oh, ow) = (node.shape[0], node.shape[1], node.shape[2]);
                let xs = self.shape(*x);
                let (h, w) = (xs[1], xs[2]);
                let dx = accumulate(grads, *x, c * h * w);
                for ch in 0..c {
                    for i in 0..oh {
                        let si = i * h / oh;
                        for j in 0..ow {
                            let sj = j * w / ow;
                            dx[(ch * h + si) * w + sj] += dy[(ch * oh + i) * ow + j];
                        }
                    }
                }
            }
            Op::AvgPool2 { x } => {
                let (c, oh, ow) = (node.shape[0], node.shape[1], node.shape[2]);
                let (h, w) = (2 * oh, 2 * ow);
                let dx = accumulate(grads, *x, c * h * w);
                for ch in 0..c {
                    for i in 0..oh {
                        for j in 0..ow {
                            let g = 0.25 * dy[(ch * oh + i) * ow + j];
                            let r0 = (ch * h + 2 * i) * w + 2 * j;
                            dx[r0] += g;
                            dx[r0 + 1] += g;
                            dx[r0 + w] += g;
                            dx[r0 + w + 1] += g;
                        }
                    }
                }
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).len();
                if self.rg(*a) {
                    let da = accumulate(grads, *a, na);
                    da.iter_mut().zip(&dy[..na]).for_each(|(d, g)| *d += g);
                }
                if self.rg(*b) {
                    let db = accumulate(grads, *b, dy.len() - na);
                    db.iter_mut().zip(&dy[na..]).for_each(|(d, g)| *d += g);
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let sign = if matches!(node.op, Op::Sub { .. }) {
                    -1.0
                } else {
                    1.0
                };
                if self.rg(*a) {
                    let da = accumulate(grads, *a, dy.len());
                    da.iter_mut().zip(dy).for_each(|(d, g)| *d += g);
                }
                if self.rg(*b) {
                    let db = accumulate(grads, *b, dy.len());
                    db.iter_mut().zip(dy).for_each(|(d, g)| *d += sign * g);
                }
            }
            Op::Mul { a, b } => {
                if self.rg(*a) {
                    let bv = self.value(*b);
                    let da = accumulate(grads, *a, dy.len());
                    for i in 0..dy.len() {
                        da[i] += dy[i] * bv[i];
                    }
                }
                if self.rg(*b) {
                    let av = self.value(*a);
                    let db = accumulate(grads, *b, dy.len());
                    for i in 0..dy.len() {
                        db[i] += dy[i] * av[i];
                    }
                }
            }
            Op::Scale { x, factor } => {
                let dx = accumulate(grads, *x, dy.len());
                dx.iter_mut().zip(dy).for_each(|(d, g)| *d += factor * g);
            }
            Op::AddScalar { x } => {
                let dx = accumulate(grads, *x, dy.len());
                dx.iter_mut().zip(dy).for_each(|(d, g)| *d += g);
            }
            Op::MulConst { x, weights } => {
                let dx = accumulate(grads, *x, dy.len());
                for i in 0..dy.len() {
                    dx[i] += dy[i] * weights[i];
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                let c = node.shape[0];
                let plane = node.shape[1] * node.shape[2];
                let dx = accumulate(grads, *x, dy.len());
                for ch in 0..c {
                    let r = ch * plane..(ch + 1) * plane;
                    let (gy, yy) = (&dy[r.clone()], &y[r.clone()]);
                    let mean_g = gy.iter().sum::<f64>() / plane as f64;
                    let mean_gy = gy.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / plane as f64;
                    let s = inv_std[ch];
                    for ((d, g), yv) in dx[r].iter_mut().zip(gy).zip(yy) {
                        *d += s * (g - mean_g - yv * mean_gy);
                    }
                }
            }
            Op::LogClamped { x, floor } => {
                let xv = self.value(*x);
                let dx = accumulate(grads, *x, dy.len());
                for i in 0..dy.len() {
                    if xv[i] > *floor {
                        dx[i] += dy[i] / xv[i];
                    }
                }
            }
            Op::Sum { x } => {
                let n = self.value(*x).len();
                let dx = accumulate(grads, *x, n);
                dx.iter_mut().for_each(|d| *d += dy[0]);
            }
            Op::Mix { a, b, mask } => {
                let plane = mask.len();
                if self.rg(*a) {
                    let da = accumulate(grads, *a, dy.len());
                    for (i, d) in da.iter_mut().enumerate() {
                        *d += mask[i % plane] * dy[i];
                    }
                }
                if self.rg(*b) {
                    let db = accumulate(grads, *b, dy.len());
                    for (i, d) in db.iter_mut().enumerate() {
                        *d += (1.0 - mask[i % plane]) * dy[i];
                    }
                }
            }
        }
    }
}
