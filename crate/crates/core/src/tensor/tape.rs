//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every op appends a node holding its output value. Nodes whose inputs
//! require gradients also keep a backward rule; `backward` walks the tape
//! once in reverse order and accumulates gradients additively.

use super::broadcast::Plan;
use super::conv::{conv_backward_raw, conv_forward_raw, ConvGeometry, Padding};
use super::norm::{self, NormMode, StatLayout};
use super::pool::{self, PoolSpec};
use super::{numel, Element, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<E> {
    Add(Var, Var, Plan),
    Sub(Var, Var, Plan),
    Mul(Var, Var, Plan),
    Scale(Var, E),
    Reshape(Var),
    MatMul(Var, Var),
    SumAll(Var),
    MeanAll(Var),
    Relu(Var),
    Sigmoid(Var),
    Conv3d { x: Var, w: Var, geom: ConvGeometry },
    MaxPool { x: Var, argmax: Vec<usize> },
    GlobalAvgPool(Var),
    Norm { x: Var, gamma: Var, beta: Var, xhat: Vec<E>, invstd: Vec<E>, layout: StatLayout },
    SoftmaxCrossEntropy { logits: Var, probs: Vec<E>, labels: Vec<usize> },
    Mse(Var, Var),
}

struct Node<E> {
    value: Tensor<E>,
    requires_grad: bool,
    op: Option<Op<E>>,
}

/// Statistics reported by a batch-mode normalization in training.
pub struct BatchStats<E> {
    pub mean: Vec<E>,
    /// Biased variance.
    pub var: Vec<E>,
    /// Elements per channel.
    pub count: usize,
}

pub struct Tape<E: Element = f32> {
    nodes: Vec<Node<E>>,
    grads: Vec<Option<Vec<E>>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Leaves with `requires_grad` receive a gradient on
    /// every backward pass.
    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: None });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<E>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<E>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor<E>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), g.clone()))
    }

    fn push(&mut self, value: Tensor<E>, inputs: &[Var], op: Op<E>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = requires_grad.then_some(op);
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[E] {
        self.nodes[v.0].value.data()
    }

    // ---------------------------------------------------------------- elementwise

    fn binary(&mut self, a: Var, b: Var, kind: u8) -> Result<Var> {
        let plan = Plan::new(self.shape(a), self.shape(b))?;
        let (da, db) = (self.data(a), self.data(b));
        let mut out = vec![E::zero(); numel(&plan.out_shape)];
        match kind {
            0 => plan.for_each(|o, i, j| out[o] = da[i] + db[j]),
            1 => plan.for_each(|o, i, j| out[o] = da[i] - db[j]),
            _ => plan.for_each(|o, i, j| out[o] = da[i] * db[j]),
        }
        let value = Tensor::from_parts(plan.out_shape.clone(), out);
        let op = match kind {
            0 => Op::Add(a, b, plan),
            1 => Op::Sub(a, b, plan),
            _ => Op::Mul(a, b, plan),
        };
        Ok(self.push(value, &[a, b], op))
    }

    /// Elementwise sum with NumPy broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 1)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, 2)
    }

    pub fn scale(&mut self, a: Var, s: E) -> Var {
        let value = self.value(a).map(|v| v * s);
        self.push(value, &[a], Op::Scale(a, s))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, &[a], Op::Reshape(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > E::zero() { v } else { E::zero() });
        self.push(value, &[a], Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, &[a], Op::Sigmoid(a))
    }

    // ---------------------------------------------------------------- reductions

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: E = self.data(a).iter().copied().sum();
        self.push(Tensor::scalar(s), &[a], Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s: E = d.iter().copied().sum::<E>() / E::of(d.len() as f64);
        self.push(Tensor::scalar(s), &[a], Op::MeanAll(a))
    }

    // ---------------------------------------------------------------- linear algebra

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![E::zero(); m * n];
        E::gemm(m, k, n, self.data(a), false, self.data(b), false, E::zero(), &mut out);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), &[a, b], Op::MatMul(a, b)))
    }

    /// Cross-correlation of `x: [B,T,H,W,Cin]` with `w: [kT,kH,kW,Cin,Cout]`.
    pub fn conv3d(&mut self, x: Var, w: Var, stride: [usize; 3], padding: Padding) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.len() != 5 || xs.len() != 5 {
            return Err(Error::shape(format!("conv3d input {xs:?}, weight {ws:?}")));
        }
        if xs[4] != ws[3] {
            return Err(Error::shape(format!(
                "channel mismatch: input has {} channels, kernel expects {}",
                xs[4], ws[3]
            )));
        }
        let geom = ConvGeometry::new(xs, [ws[0], ws[1], ws[2]], stride, padding, ws[4])?;
        let out = conv_forward_raw(&geom, self.data(x), self.data(w));
        let value = Tensor::from_parts(geom.output_shape(), out);
        Ok(self.push(value, &[x, w], Op::Conv3d { x, w, geom }))
    }

    // ---------------------------------------------------------------- pooling

    pub fn maxpool_spatial(&mut self, x: Var, spec: PoolSpec) -> Result<Var> {
        let geom = spec.geometry(self.shape(x))?;
        let (out, argmax) = pool::maxpool_forward(&geom, self.data(x));
        let value = Tensor::from_parts(geom.output_shape(), out);
        Ok(self.push(value, &[x], Op::MaxPool { x, argmax }))
    }

    /// `[B,T,H,W,C] -> [B,C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 5 {
            return Err(Error::shape(format!("global pool needs [B,T,H,W,C], got {shape:?}")));
        }
        let out = pool::global_avg_forward(&shape, self.data(x));
        let value = Tensor::from_parts(vec![shape[0], shape[4]], out);
        Ok(self.push(value, &[x], Op::GlobalAvgPool(x)))
    }

    // ---------------------------------------------------------------- normalization

    /// Normalizes over channels-last activations; returns batch statistics
    /// in [`NormMode::BatchTrain`].
    pub fn norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: NormMode<'_, E>,
    ) -> Result<(Var, Option<BatchStats<E>>)> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().ok_or_else(|| Error::shape("norm of a scalar"))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape(format!(
                "norm params {:?}/{:?} for {c} channels",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        match mode {
            NormMode::BatchEval { mean, var } if mean.len() != c || var.len() != c => {
                return Err(Error::shape("running statistics do not match channel count"));
            }
            NormMode::Group { groups } if groups == 0 || c % groups != 0 || shape.len() < 2 => {
                return Err(Error::shape(format!("{c} channels cannot form {groups} groups")));
            }
            _ => {}
        }
        let out = norm::forward(&shape, self.data(x), self.data(gamma), self.data(beta), mode);
        let count = numel(&shape) / c;
        let stats = out.batch_stats.map(|(mean, var)| BatchStats { mean, var, count });
        let value = Tensor::from_parts(shape, out.y);
        let op = Op::Norm { x, gamma, beta, xhat: out.xhat, invstd: out.invstd, layout: out.layout };
        Ok((self.push(value, &[x, gamma, beta], op), stats))
    }

    // ---------------------------------------------------------------- losses

    /// Mean softmax cross-entropy of `[B,K]` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::shape(format!("logits {shape:?} for {} labels", labels.len())));
        }
        let (b, k) = (shape[0], shape[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Index(format!("class index {bad} with {k} classes")));
        }
        let d = self.data(logits);
        let mut probs = vec![E::zero(); b * k];
        let mut loss = E::zero();
        for (r, &label) in labels.iter().enumerate() {
            let row = &d[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(E::neg_infinity(), E::max);
            let mut z = E::zero();
            for (p, &v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
                *p = (v - max).exp();
                z += *p;
            }
            probs[r * k..(r + 1) * k].iter_mut().for_each(|p| *p = *p / z);
            loss += z.ln() + max - row[label];
        }
        loss = loss / E::of(b as f64);
        let op = Op::SoftmaxCrossEntropy { logits, probs, labels: labels.to_vec() };
        Ok(self.push(Tensor::scalar(loss), &[logits], op))
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!("mse {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let (da, db) = (self.data(a), self.data(b));
        let s: E = da.iter().zip(db).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let value = Tensor::scalar(s / E::of(da.len() as f64));
        Ok(self.push(value, &[a, b], Op::Mse(a, b)))
    }

    // ---------------------------------------------------------------- backward

    /// Back-propagates from a scalar `loss`. Afterwards every node that
    /// requires a gradient has one (zeros if the loss does not depend on it).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::contract("backward on an empty tape"));
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![E::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if let Some(op) = &self.nodes[i].op {
                self.backprop(op, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && g.is_none() {
                *g = Some(vec![E::zero(); node.value.numel()]);
            } else if !node.requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop(&self, op: &Op<E>, g: &[E], grads: &mut [Option<Vec<E>>]) {
        let mut acc = |v: Var, delta: Vec<E>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(&delta).for_each(|(e, d)| *e += *d),
                slot @ None => *slot = Some(delta),
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Add(a, b, plan) | Op::Sub(a, b, plan) => {
                let negate = matches!(op, Op::Sub(..));
                if needs(*a) {
                    let mut ga = vec![E::zero(); self.data(*a).len()];
                    plan.for_each(|o, i, _| ga[i] += g[o]);
                    acc(*a, ga);
                }
                if needs(*b) {
                    let mut gb = vec![E::zero(); self.data(*b).len()];
                    if negate {
                        plan.for_each(|o, _, j| gb[j] -= g[o]);
                    } else {
                        plan.for_each(|o, _, j| gb[j] += g[o]);
                    }
                    acc(*b, gb);
                }
            }
            Op::Mul(a, b, plan) => {
                let (da, db) = (self.data(*a), self.data(*b));
                if needs(*a) {
                    let mut ga = vec![E::zero(); da.len()];
                    plan.for_each(|o, i, j| ga[i] += g[o] * db[j]);
                    acc(*a, ga);
                }
                if needs(*b) {
                    let mut gb = vec![E::zero(); db.len()];
                    plan.for_each(|o, i, j| gb[j] += g[o] * da[i]);
                    acc(*b, gb);
                }
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|&v| v * *s).collect()),
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Relu(a) => {
                let da = self.data(*a);
                acc(*a, g.iter().zip(da).map(|(&gv, &x)| if x > E::zero() { gv } else { E::zero() }).collect());
            }
            Op::Sigmoid(a) => {
                // Output values are the node's own value; recompute from input.
                let da = self.data(*a);
                acc(
                    *a,
                    g.iter()
                        .zip(da)
                        .map(|(&gv, &x)| {
                            let s = sigmoid(x);
                            gv * s * (E::one() - s)
                        })
                        .collect(),
                );
            }
            Op::SumAll(a) => acc(*a, vec![g[0]; self.data(*a).len()]),
            Op::MeanAll(a) => {
                let n = self.data(*a).len();
                acc(*a, vec![g[0] / E::of(n as f64); n]);
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if needs(*a) {
                    let mut ga = vec![E::zero(); m * k];
                    E::gemm(m, n, k, g, false, self.data(*b), true, E::zero(), &mut ga);
                    acc(*a, ga);
                }
                if needs(*b) {
                    let mut gb = vec![E::zero(); k * n];
                    E::gemm(k, m, n, self.data(*a), true, g, false, E::zero(), &mut gb);
                    acc(*b, gb);
                }
            }
            Op::Conv3d { x, w, geom } => {
                let (dx, dw) = conv_backward_raw(geom, self.data(*x), self.data(*w), g, needs(*x), needs(*w));
                if let Some(dx) = dx {
                    acc(*x, dx);
                }
                if let Some(dw) = dw {
                    acc(*w, dw);
                }
            }
            Op::MaxPool { x, argmax } => {
                let mut gx = vec![E::zero(); self.data(*x).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    gx[src] += gv;
                }
                acc(*x, gx);
            }
            Op::GlobalAvgPool(x) => acc(*x, pool::global_avg_backward(self.shape(*x), g)),
            Op::Norm { x, gamma, beta, xhat, invstd, layout } => {
                let (dx, dgamma, dbeta) =
                    norm::backward(self.shape(*x), g, xhat, invstd, self.data(*gamma), layout);
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
            Op::SoftmaxCrossEntropy { logits, probs, labels } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / E::of(labels.len() as f64);
                let mut gl: Vec<E> = probs.iter().map(|&p| p * scale).collect();
                for (r, &l) in labels.iter().enumerate() {
                    gl[r * k + l] -= scale;
                }
                acc(*logits, gl);
            }
            Op::Mse(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                let s = E::of(2.0) * g[0] / E::of(da.len() as f64);
                let diff: Vec<E> = da.iter().zip(db).map(|(&x, &y)| (x - y) * s).collect();
                if needs(*b) {
                    acc(*b, diff.iter().map(|&d| -d).collect());
                }
                acc(*a, diff);
            }
        }
    }
}

fn sigmoid<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}
