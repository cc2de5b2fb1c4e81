//! Reverse-mode differentiation over the fixed layer set used by the
//! classifier.
//!
//! A [`Tape`] records every op in execution order. Inputs of a node always
//! precede it, so the recording is a topological order by construction and
//! [`Tape::backward`] is a single reverse sweep.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};

use super::kernels::{self, ConvGeom};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Lower clamp applied to the target probability inside cross-entropy.
pub const CE_CLAMP: f64 = 1e-12;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    tape: u64,
}

/// Nonlinearity inside an adaptive activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseActivation {
    Tanh,
    Relu,
}

impl BaseActivation {
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            BaseActivation::Tanh => z.tanh(),
            BaseActivation::Relu => z.max(T::zero()),
        }
    }

    /// Derivative at `z`, given `y = apply(z)`.
    fn slope<T: Real>(self, z: T, y: T) -> T {
        match self {
            BaseActivation::Tanh => T::one() - y * y,
            BaseActivation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Activation applied by [`Tape::activate`].
#[derive(Clone, Copy, Debug)]
pub enum ActivationFn {
    Relu,
    Tanh,
    /// `base(n * a * x)` with trainable scalar `a` (a one-element node)
    /// and fixed scale `n`.
    Adaptive {
        base: BaseActivation,
        slope: Var,
        n: f64,
    },
}

/// Deliberate gradient corruption used as a negative control for the
/// gradient checker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fault {
    /// Multiply every conv kernel gradient by the given factor.
    ScaleConvKernelGrad(f64),
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv {
        x: usize,
        kernel: usize,
        bias: usize,
        geom: ConvGeom,
        // im2col matrix; `None` for 1x1 kernels (the input is the matrix)
        cols: Option<Vec<T>>,
    },
    MaxPool {
        x: usize,
        argmax: Vec<usize>,
    },
    Gap {
        x: usize,
    },
    Act {
        x: usize,
        base: BaseActivation,
        slope: Option<usize>,
        n: T,
    },
    Dropout {
        x: usize,
        mask: Option<Vec<T>>,
    },
    Softmax {
        x: usize,
    },
    CrossEntropy {
        p: usize,
        target: usize,
    },
    Sum {
        x: usize,
    },
    Flatten {
        x: usize,
    },
    Dense {
        x: usize,
        w: usize,
        b: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Scale {
        x: usize,
        c: T,
    },
    SlopeRecovery {
        slopes: Vec<usize>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Conv { x, kernel, bias, .. } => vec![*x, *kernel, *bias],
            Op::MaxPool { x, .. }
            | Op::Gap { x }
            | Op::Dropout { x, .. }
            | Op::Softmax { x }
            | Op::Sum { x }
            | Op::Flatten { x }
            | Op::Scale { x, .. } => vec![*x],
            Op::Act { x, slope, .. } => std::iter::once(*x).chain(*slope).collect(),
            Op::CrossEntropy { p, .. } => vec![*p],
            Op::Dense { x, w, b } => vec![*x, *w, *b],
            Op::Add { a, b } => vec![*a, *b],
            Op::SlopeRecovery { slopes } => slopes.clone(),
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    trainable: bool,
}

/// Recorded computation graph.
#[derive(Debug)]
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    record: bool,
    fault: Option<Fault>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    /// A tape that keeps everything needed for [`Tape::backward`].
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            record: true,
            fault: None,
        }
    }

    /// A forward-only tape: no backward caches, no gradients.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn resolve(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::Graph(format!(
                "node {} belongs to a different tape",
                v.index
            )));
        }
        if v.index >= self.nodes.len() {
            return Err(Error::Graph(format!("missing node {}", v.index)));
        }
        Ok(v.index)
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        Ok(&self.nodes[self.resolve(v)?])
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(&self.node(v)?.value)
    }

    /// Gradient stored on a trainable leaf by the last backward pass.
    pub fn grad(&self, v: Var) -> Result<Option<&[T]>> {
        Ok(self.node(v)?.value.grad())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = self.record && op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable: false,
        });
        Var {
            index,
            tape: self.id,
        }
    }

    fn leaf(&mut self, value: Tensor<T>, trainable: bool) -> Var {
        let index = self.nodes.len();
        let trainable = trainable && self.record;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: trainable,
            trainable,
        });
        Var {
            index,
            tape: self.id,
        }
    }

    /// Trainable leaf; receives a gradient on backward.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Non-trainable leaf (inputs, buffers).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// Same-padded 2-D cross-correlation of an `H x W x Cin` map with an
    /// `Cout x Cin x k x k` kernel (odd `k`) plus per-channel bias.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Var) -> Result<Var> {
        let (xi, ki, bi) = (self.resolve(x)?, self.resolve(kernel)?, self.resolve(bias)?);
        let xs = self.nodes[xi].value.shape();
        let ks = self.nodes[ki].value.shape();
        let bs = self.nodes[bi].value.shape();
        if xs.len() != 3 {
            return Err(Error::Shape(format!("conv input must be HxWxC, got {xs:?}")));
        }
        if ks.len() != 4 || ks[2] != ks[3] || ks[2] % 2 == 0 {
            return Err(Error::Shape(format!(
                "conv kernel must be out x in x k x k with odd k, got {ks:?}"
            )));
        }
        if ks[1] != xs[2] {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, input has {}",
                ks[1], xs[2]
            )));
        }
        if bs != [ks[0]] {
            return Err(Error::Shape(format!(
                "conv bias shape {bs:?} does not match {} output channels",
                ks[0]
            )));
        }
        let geom = ConvGeom {
            h: xs[0],
            w: xs[1],
            cin: xs[2],
            cout: ks[0],
            k: ks[2],
        };
        let xdata = self.nodes[xi].value.data();
        let cols = (geom.k != 1).then(|| kernels::im2col(xdata, &geom));
        let out = kernels::conv_forward(
            cols.as_deref().unwrap_or(xdata),
            self.nodes[ki].value.data(),
            self.nodes[bi].value.data(),
            &geom,
        );
        let value = Tensor::new(&[geom.h, geom.w, geom.cout], out)?;
        let cols = if self.record { cols } else { None };
        Ok(self.push(
            value,
            Op::Conv {
                x: xi,
                kernel: ki,
                bias: bi,
                geom,
                cols,
            },
        ))
    }

    /// Non-overlapping 2x2 max pooling; a trailing odd row/column is dropped.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        self.maxpool(x, 2, 2)
    }

    /// Max pooling with a window of `ph x pw`, each 1 or 2.
    pub fn maxpool(&mut self, x: Var, ph: usize, pw: usize) -> Result<Var> {
        let xi = self.resolve(x)?;
        let s = self.nodes[xi].value.shape().to_vec();
        if s.len() != 3 {
            return Err(Error::Shape(format!("maxpool input must be HxWxC, got {s:?}")));
        }
        if !(1..=2).contains(&ph) || !(1..=2).contains(&pw) {
            return Err(Error::Parameter(format!("unsupported pool window {ph}x{pw}")));
        }
        if s[0] < ph || s[1] < pw {
            return Err(Error::DegenerateInput(format!(
                "maxpool {ph}x{pw} needs at least {ph}x{pw} cells, input is {}x{}",
                s[0], s[1]
            )));
        }
        let (out, argmax) =
            kernels::maxpool(self.nodes[xi].value.data(), (s[0], s[1], s[2]), ph, pw);
        let value = Tensor::new(&[s[0] / ph, s[1] / pw, s[2]], out)?;
        Ok(self.push(value, Op::MaxPool { x: xi, argmax }))
    }

    /// Per-channel mean of an `H x W x C` map, giving a `C` vector.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xi = self.resolve(x)?;
        let s = self.nodes[xi].value.shape();
        if s.len() != 3 {
            return Err(Error::Shape(format!("GAP input must be HxWxC, got {s:?}")));
        }
        let (cells, c) = (s[0] * s[1], s[2]);
        let mut out = vec![T::zero(); c];
        for px in self.nodes[xi].value.data().chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(px) {
                *o = *o + v;
            }
        }
        let inv = T::one() / T::of(cells as f64);
        out.iter_mut().for_each(|o| *o = *o * inv);
        let value = Tensor::new(&[c], out)?;
        Ok(self.push(value, Op::Gap { x: xi }))
    }

    pub fn activate(&mut self, x: Var, f: ActivationFn) -> Result<Var> {
        let xi = self.resolve(x)?;
        let (base, slope, n) = match f {
            ActivationFn::Relu => (BaseActivation::Relu, None, T::one()),
            ActivationFn::Tanh => (BaseActivation::Tanh, None, T::one()),
            ActivationFn::Adaptive { base, slope, n } => {
                let si = self.resolve(slope)?;
                if self.nodes[si].value.len() != 1 {
                    return Err(Error::Shape("adaptive slope must be a single value".into()));
                }
                if !(n.is_finite() && n > 0.0) {
                    return Err(Error::Parameter(format!("adaptive scale n = {n} must be positive")));
                }
                (base, Some(si), T::of(n))
            }
        };
        let gain = match slope {
            Some(si) => n * self.nodes[si].value.data()[0],
            None => T::one(),
        };
        let xv = &self.nodes[xi].value;
        let out: Vec<T> = xv.data().iter().map(|&v| base.apply(gain * v)).collect();
        let value = Tensor::new(xv.shape(), out)?;
        Ok(self.push(
            value,
            Op::Act {
                x: xi,
                base,
                slope,
                n,
            },
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Outside training mode this is the exact identity.
    pub fn dropout(&mut self, x: Var, rate: f64, train: bool, rng: &mut dyn RngCore) -> Result<Var> {
        let xi = self.resolve(x)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate {rate} must be in [0, 1)")));
        }
        let xv = &self.nodes[xi].value;
        if !train || rate == 0.0 {
            let value = xv.clone();
            return Ok(self.push(value, Op::Dropout { x: xi, mask: None }));
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape(), out)?;
        let mask = self.record.then_some(mask);
        Ok(self.push(value, Op::Dropout { x: xi, mask }))
    }

    /// Softmax over all elements, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xi = self.resolve(x)?;
        let xv = &self.nodes[xi].value;
        if !xv.all_finite() {
            return Err(Error::Numeric("softmax input contains NaN or infinity".into()));
        }
        let max = xv.data().iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = xv.data().iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        let out = exps.into_iter().map(|e| e / total).collect();
        let value = Tensor::new(xv.shape(), out)?;
        Ok(self.push(value, Op::Softmax { x: xi }))
    }

    /// `-ln(max(p[target], 1e-12))` for a probability vector `p`.
    pub fn cross_entropy(&mut self, p: Var, target: usize) -> Result<Var> {
        let pi = self.resolve(p)?;
        let pv = &self.nodes[pi].value;
        if target >= pv.len() {
            return Err(Error::Index(format!(
                "target class {target} out of range for {} classes",
                pv.len()
            )));
        }
        let pt = pv.data()[target].max(T::of(CE_CLAMP));
        Ok(self.push(Tensor::scalar(-pt.ln()), Op::CrossEntropy { p: pi, target }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let xi = self.resolve(x)?;
        let total = self.nodes[xi].value.data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(total), Op::Sum { x: xi }))
    }

    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xi = self.resolve(x)?;
        let xv = &self.nodes[xi].value;
        let value = Tensor::new(&[xv.len()], xv.data().to_vec())?;
        Ok(self.push(value, Op::Flatten { x: xi }))
    }

    /// `W x + b` for a flat `x` of length `D`, `W` of shape `C x D`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xi, wi, bi) = (self.resolve(x)?, self.resolve(w)?, self.resolve(b)?);
        let (xv, wv, bv) = (&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value);
        let ws = wv.shape();
        if ws.len() != 2 || ws[1] != xv.len() || bv.shape() != [ws[0]] {
            return Err(Error::Shape(format!(
                "dense layer {ws:?} with bias {:?} cannot take an input of {} values",
                bv.shape(),
                xv.len()
            )));
        }
        let (c, d) = (ws[0], ws[1]);
        let mut out = bv.data().to_vec();
        T::gemm(c, d, 1, wv.data(), (d, 1), xv.data(), (1, 1), T::one(), &mut out, (1, 1));
        let value = Tensor::new(&[c], out)?;
        Ok(self.push(value, Op::Dense { x: xi, w: wi, b: bi }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.resolve(a)?, self.resolve(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::new(av.shape(), out)?;
        Ok(self.push(value, Op::Add { a: ai, b: bi }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let xi = self.resolve(x)?;
        let c = T::of(c);
        let xv = &self.nodes[xi].value;
        let out = xv.data().iter().map(|&v| v * c).collect();
        let value = Tensor::new(xv.shape(), out)?;
        Ok(self.push(value, Op::Scale { x: xi, c }))
    }

    /// Slope-recovery term for layer-wise adaptive slopes:
    /// `1 / mean(exp(a_k))`. Smaller when slopes grow, so adding it to the
    /// loss pushes slopes up.
    pub fn slope_recovery(&mut self, slopes: &[Var]) -> Result<Var> {
        if slopes.is_empty() {
            return Err(Error::Parameter("slope recovery needs at least one slope".into()));
        }
        let idx = slopes.iter().map(|&s| self.resolve(s)).collect::<Result<Vec<_>>>()?;
        let mut mean = T::zero();
        for &i in &idx {
            let v = &self.nodes[i].value;
            if v.len() != 1 {
                return Err(Error::Shape("slope recovery takes scalar slopes".into()));
            }
            mean = mean + v.data()[0].exp();
        }
        mean = mean / T::of(idx.len() as f64);
        Ok(self.push(Tensor::scalar(T::one() / mean), Op::SlopeRecovery { slopes: idx }))
    }

    /// Hash of every discrete branch taken in the forward pass (relu signs,
    /// maxpool winners). Two passes with equal signatures lie in the same
    /// differentiable piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::MaxPool { argmax, .. } => {
                    i.hash(&mut h);
                    argmax.hash(&mut h);
                }
                Op::Act {
                    base: BaseActivation::Relu,
                    ..
                } => {
                    i.hash(&mut h);
                    for v in node.value.data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `loss`. Every trainable leaf that the
    /// loss depends on ends up with its gradient set; other leaves keep no
    /// gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let li = self.resolve(loss)?;
        if !self.record {
            return Err(Error::Graph("backward on an inference-only tape".into()));
        }
        if self.nodes[li].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[li].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=li).map(|_| None).collect();
        grads[li] = Some(vec![T::one()]);

        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Some(&bad) = node.op.inputs().iter().find(|&&j| j >= i) {
                return Err(Error::Graph(format!("node {i} depends on later node {bad}")));
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.backward_node(i, &g, &mut grads)?;
        }

        for (i, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[i];
            if node.trainable {
                let g = g.unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                node.value.set_grad(g)?;
            }
        }
        Ok(())
    }

    fn wants(&self, j: usize) -> bool {
        self.nodes[j].requires_grad
    }

    fn backward_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                x,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let xdata = self.nodes[*x].value.data();
                let kdata = self.nodes[*kernel].value.data();
                if self.wants(*kernel) {
                    let cols = cols.as_deref().unwrap_or(xdata);
                    let mut dk = vec![T::zero(); kdata.len()];
                    kernels::conv_backward_kernel(cols, g, geom, &mut dk);
                    if let Some(Fault::ScaleConvKernelGrad(f)) = self.fault {
                        let f = T::of(f);
                        dk.iter_mut().for_each(|d| *d = *d * f);
                    }
                    accumulate(grads, *kernel, dk);
                }
                if self.wants(*bias) {
                    let mut db = vec![T::zero(); geom.cout];
                    kernels::conv_backward_bias(g, geom, &mut db);
                    accumulate(grads, *bias, db);
                }
                if self.wants(*x) {
                    let dcols = kernels::conv_backward_cols(g, kdata, geom);
                    let dx = if geom.k == 1 {
                        dcols
                    } else {
                        let mut dx = vec![T::zero(); xdata.len()];
                        kernels::col2im_add(&dcols, geom, &mut dx);
                        dx
                    };
                    accumulate(grads, *x, dx);
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); self.nodes[*x].value.len()];
                    for (&src, &gv) in argmax.iter().zip(g) {
                        dx[src] = dx[src] + gv;
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Gap { x } => {
                if self.wants(*x) {
                    let xv = &self.nodes[*x].value;
                    let c = g.len();
                    let inv = T::one() / T::of((xv.len() / c) as f64);
                    let dx = (0..xv.len()).map(|k| g[k % c] * inv).collect();
                    accumulate(grads, *x, dx);
                }
            }
            Op::Act { x, base, slope, n } => {
                let xv = self.nodes[*x].value.data();
                let yv = node.value.data();
                let a = slope.map(|s| self.nodes[s].value.data()[0]);
                let gain = a.map_or(T::one(), |a| *n * a);
                // dL/dz for z = gain * x
                let dz: Vec<T> = xv
                    .iter()
                    .zip(yv)
                    .zip(g)
                    .map(|((&xx, &yy), &gg)| gg * base.slope(gain * xx, yy))
                    .collect();
                if self.wants(*x) {
                    accumulate(grads, *x, dz.iter().map(|&d| d * gain).collect());
                }
                if let Some(s) = slope {
                    if self.wants(*s) {
                        let da: T = dz.iter().zip(xv).map(|(&d, &xx)| d * xx).sum::<T>() * *n;
                        accumulate(grads, *s, vec![da]);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if self.wants(*x) {
                    let dx = match mask {
                        Some(m) => g.iter().zip(m).map(|(&gv, &mv)| gv * mv).collect(),
                        None => g.to_vec(),
                    };
                    accumulate(grads, *x, dx);
                }
            }
            Op::Softmax { x } => {
                if self.wants(*x) {
                    let p = node.value.data();
                    let dot: T = p.iter().zip(g).map(|(&pp, &gg)| pp * gg).sum();
                    let dx = p.iter().zip(g).map(|(&pp, &gg)| pp * (gg - dot)).collect();
                    accumulate(grads, *x, dx);
                }
            }
            Op::CrossEntropy { p, target } => {
                if self.wants(*p) {
                    let pv = self.nodes[*p].value.data();
                    let mut dp = vec![T::zero(); pv.len()];
                    let pt = pv[*target];
                    if pt > T::of(CE_CLAMP) {
                        dp[*target] = -g[0] / pt;
                    }
                    accumulate(grads, *p, dp);
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    accumulate(grads, *x, vec![g[0]; self.nodes[*x].value.len()]);
                }
            }
            Op::Flatten { x } => {
                if self.wants(*x) {
                    accumulate(grads, *x, g.to_vec());
                }
            }
            Op::Dense { x, w, b } => {
                let xv = self.nodes[*x].value.data();
                let wv = self.nodes[*w].value.data();
                let d = xv.len();
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); wv.len()];
                    for (row, &gv) in dw.chunks_exact_mut(d).zip(g) {
                        for (o, &xx) in row.iter_mut().zip(xv) {
                            *o = gv * xx;
                        }
                    }
                    accumulate(grads, *w, dw);
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.to_vec());
                }
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); d];
                    T::gemm(d, g.len(), 1, wv, (1, d), g, (1, 1), T::zero(), &mut dx, (1, 1));
                    accumulate(grads, *x, dx);
                }
            }
            Op::Add { a, b } => {
                for j in [*a, *b] {
                    if self.wants(j) {
                        accumulate(grads, j, g.to_vec());
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.wants(*x) {
                    accumulate(grads, *x, g.iter().map(|&v| v * *c).collect());
                }
            }
            Op::SlopeRecovery { slopes } => {
                // S = k / sum(exp a);  dS/da_j = -S^2 exp(a_j) / k
                let s = node.value.data()[0];
                let k = T::of(slopes.len() as f64);
                for &j in slopes {
                    if self.wants(j) {
                        let a = self.nodes[j].value.data()[0];
                        accumulate(grads, j, vec![-g[0] * s * s * a.exp() / k]);
                    }
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Vec<T>>], j: usize, delta: Vec<T>) {
    match &mut grads[j] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e = *e + d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
