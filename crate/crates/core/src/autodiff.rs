//! Tape-based reverse-mode differentiation over a fixed set of tensor ops.
//!
//! A [`Graph`] records every op applied during a forward pass. Parameters
//! are referenced in place from a borrowed [`ParamSet`] rather than copied,
//! so building one graph per training example stays cheap even for large
//! kernel banks. [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients: parameter gradients land in a [`ParamGrads`]
//! buffer, input gradients are kept for inputs created with
//! `requires_grad`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ops::{self, PoolMode};
use crate::params::{ParamGrads, ParamId, ParamSet};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Affine { w: NodeId, x: NodeId, b: NodeId },
    Relu(NodeId),
    Conv1dSame { x: NodeId, h: NodeId },
    Pool { y: NodeId, mode: PoolMode, argmax: Vec<usize> },
    LogCompress { v: NodeId, eps: f64 },
    Softmax(NodeId),
    Scale { x: NodeId, factor: f64 },
    Add(NodeId, NodeId),
    WeightedSum { weights: NodeId, items: Vec<NodeId> },
    Sum(NodeId),
    CrossEntropy { logits: NodeId, target: usize },
    Huber { pred: NodeId, target: Tensor, delta: f64 },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Forward tape bound to a parameter set.
pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParamGrads,
    inputs: HashMap<NodeId, Tensor>,
}

impl Gradients {
    /// Gradient with respect to an input created with `requires_grad`.
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.inputs.get(&node)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(32),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(pid) => self.params.tensor(pid),
            _ => node.value.as_ref().expect("non-parameter nodes carry values"),
        }
    }

    fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|&i| self.requires_grad(i));
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant (or differentiable, if `requires_grad`) leaf.
    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Input,
            value: Some(value),
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let trainable = self.params.get(id).trainable;
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> Result<NodeId> {
        let value = ops::affine(self.value(w), self.value(x), self.value(b))?;
        Ok(self.push(Op::Affine { w, x, b }, value, &[w, x, b]))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = ops::relu(self.value(x));
        self.push(Op::Relu(x), value, &[x])
    }

    pub fn conv1d_same(&mut self, x: NodeId, h: NodeId) -> Result<NodeId> {
        let value = ops::conv1d_same(self.value(x), self.value(h))?;
        Ok(self.push(Op::Conv1dSame { x, h }, value, &[x, h]))
    }

    pub fn pool_over_time(&mut self, y: NodeId, mode: PoolMode) -> Result<NodeId> {
        let (value, argmax) = ops::pool_over_time(self.value(y), mode)?;
        Ok(self.push(Op::Pool { y, mode, argmax }, value, &[y]))
    }

    pub fn log_compress(&mut self, v: NodeId, eps: f64) -> Result<NodeId> {
        let value = ops::log_compress(self.value(v), eps)?;
        Ok(self.push(Op::LogCompress { v, eps }, value, &[v]))
    }

    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let src = self.value(x);
        let value = Tensor::new(src.shape().to_vec(), ops::softmax(src.data())).expect("same shape");
        self.push(Op::Softmax(x), value, &[x])
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let src = self.value(x);
        let data = src.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push(Op::Scale { x, factor }, value, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::dim("add", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value, &[a, b]))
    }

    /// `Σ_i weights[i] · items[i]`; every item must share one shape.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let w = self.value(weights);
        if w.rank() != 1 || w.len() != items.len() || items.is_empty() {
            return Err(Error::dim("weighted_sum", w.shape(), &[items.len()]));
        }
        let shape = self.value(items[0]).shape().to_vec();
        let mut acc = vec![0.0; self.value(items[0]).len()];
        for (&item, &wi) in items.iter().zip(w.data()) {
            let v = self.value(item);
            if v.shape() != shape.as_slice() {
                return Err(Error::Config(format!(
                    "weighted_sum items disagree: {:?} vs {:?}",
                    shape,
                    v.shape()
                )));
            }
            for (a, x) in acc.iter_mut().zip(v.data()) {
                *a += wi * x;
            }
        }
        let value = Tensor::new(shape, acc)?;
        let mut inputs = items.to_vec();
        inputs.push(weights);
        Ok(self.push(
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            value,
            &inputs,
        ))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::scalar(total), &[x])
    }

    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let loss = ops::cross_entropy(self.value(logits).data(), target)?;
        Ok(self.push(Op::CrossEntropy { logits, target }, Tensor::scalar(loss), &[logits]))
    }

    pub fn huber(&mut self, pred: NodeId, target: Tensor, delta: f64) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::dim("huber", p.shape(), target.shape()));
        }
        let loss = ops::huber(p.data(), target.data(), delta)?;
        Ok(self.push(
            Op::Huber {
                pred,
                target,
                delta,
            },
            Tensor::scalar(loss),
            &[pred],
        ))
    }

    /// Hash of every piecewise-linear decision on the tape: relu signs,
    /// max-pool winners and rectifier signs. Two forward passes with equal
    /// signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            hash ^= v;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for v in self.value(*x).data() {
                        eat((*v > 0.0) as u64);
                    }
                }
                Op::Pool { y, argmax, .. } => {
                    argmax.iter().for_each(|&a| eat(a as u64));
                    for v in self.value(*y).data() {
                        eat(v.partial_cmp(&0.0).map_or(3, |o| o as i8 as u64 & 3));
                    }
                }
                _ => {}
            }
        }
        hash
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let mut params = ParamGrads::zeros_like(self.params);
        let inputs = self.backward_into(loss, &mut params)?;
        Ok(Gradients { params, inputs })
    }

    /// Reverse pass that adds parameter gradients into `acc`.
    ///
    /// Returns gradients for inputs created with `requires_grad`.
    pub fn backward_into(&self, loss: NodeId, acc: &mut ParamGrads) -> Result<HashMap<NodeId, Tensor>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if acc.len() != self.params.len() {
            return Err(Error::dim("backward", &[acc.len()], &[self.params.len()]));
        }
        let mut pass = Backward {
            graph: self,
            grads: (0..self.nodes.len()).map(|_| None).collect(),
            acc,
        };
        if self.requires_grad(loss) {
            pass.slot(loss)[0] += 1.0;
        }
        for idx in (0..=loss.0).rev() {
            let id = NodeId(idx);
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(grad) = pass.grads[idx].take() else {
                continue;
            };
            pass.propagate(id, &grad)?;
        }
        let mut inputs = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Input) && node.requires_grad {
                let shape = node.value.as_ref().unwrap().shape().to_vec();
                let data = pass.grads[idx]
                    .take()
                    .unwrap_or_else(|| vec![0.0; shape.iter().product()]);
                inputs.insert(NodeId(idx), Tensor::new(shape, data)?);
            }
        }
        Ok(inputs)
    }
}

struct Backward<'a, 'p> {
    graph: &'a Graph<'p>,
    grads: Vec<Option<Vec<f64>>>,
    acc: &'a mut ParamGrads,
}

impl Backward<'_, '_> {
    /// Gradient buffer for a node; parameters write straight into the
    /// accumulator.
    fn slot(&mut self, id: NodeId) -> &mut [f64] {
        let node = &self.graph.nodes[id.0];
        if let Op::Param(pid) = node.op {
            return self.acc.get_mut(pid).data_mut();
        }
        let len = self.graph.value(id).len();
        self.grads[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn wants(&self, id: NodeId) -> bool {
        self.graph.requires_grad(id)
    }

    fn propagate(&mut self, id: NodeId, g: &[f64]) -> Result<()> {
        let graph = self.graph;
        let out = graph.value(id);
        match &graph.nodes[id.0].op {
            Op::Input | Op::Param(_) => {}
            Op::Affine { w, x, b } => {
                let (w, x, b) = (*w, *x, *b);
                let wt = graph.value(w);
                let cols = wt.shape()[1];
                if self.wants(b) {
                    add_into(self.slot(b), g);
                }
                if self.wants(w) {
                    let xs = graph.value(x).data();
                    let dw = self.slot(w);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            axpy(&mut dw[r * cols..(r + 1) * cols], gr, xs);
                        }
                    }
                }
                if self.wants(x) {
                    let dx = self.slot(x);
                    for (r, &gr) in g.iter().enumerate() {
                        if gr != 0.0 {
                            axpy(dx, gr, wt.row(r));
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let x = *x;
                if self.wants(x) {
                    let xs = graph.value(x).data();
                    let dx = self.slot(x);
                    for ((d, &gi), &xi) in dx.iter_mut().zip(g).zip(xs) {
                        if xi > 0.0 {
                            *d += gi;
                        }
                    }
                }
            }
            Op::Conv1dSame { x, h } => {
                let (x, h) = (*x, *h);
                let ht = graph.value(h);
                let taps = *ht.shape().last().unwrap();
                let n = graph.value(x).len();
                let rows = ht.len() / taps;
                let padded = ops::pad_same(graph.value(x).data(), taps);
                if self.wants(h) {
                    let dh = self.slot(h);
                    for r in 0..rows {
                        let gy = &g[r * n..(r + 1) * n];
                        let dhr = &mut dh[r * taps..(r + 1) * taps];
                        for (t, &gt) in gy.iter().enumerate() {
                            if gt != 0.0 {
                                axpy(dhr, gt, &padded[t..t + taps]);
                            }
                        }
                    }
                }
                if self.wants(x) {
                    let mut dpad = vec![0.0; n + taps - 1];
                    for r in 0..rows {
                        let gy = &g[r * n..(r + 1) * n];
                        let hr = &ht.data()[r * taps..(r + 1) * taps];
                        for (t, &gt) in gy.iter().enumerate() {
                            if gt != 0.0 {
                                axpy(&mut dpad[t..t + taps], gt, hr);
                            }
                        }
                    }
                    let half = (taps - 1) / 2;
                    add_into(self.slot(x), &dpad[half..half + n]);
                }
            }
            Op::Pool { y, mode, argmax } => {
                let y = *y;
                if self.wants(y) {
                    let yt = graph.value(y);
                    let cols = *yt.shape().last().unwrap();
                    let ys = yt.data();
                    let dy = self.slot(y);
                    for (r, &gr) in g.iter().enumerate() {
                        match mode {
                            PoolMode::Max => {
                                let i = r * cols + argmax[r];
                                dy[i] += gr * sign(ys[i]);
                            }
                            PoolMode::Avg => {
                                let scale = gr / cols as f64;
                                for i in r * cols..(r + 1) * cols {
                                    dy[i] += scale * sign(ys[i]);
                                }
                            }
                        }
                    }
                }
            }
            Op::LogCompress { v, eps } => {
                let (v, eps) = (*v, *eps);
                if self.wants(v) {
                    let vs = graph.value(v).data();
                    let dv = self.slot(v);
                    for ((d, &gi), &vi) in dv.iter_mut().zip(g).zip(vs) {
                        *d += gi / (vi + eps);
                    }
                }
            }
            Op::Softmax(x) => {
                let x = *x;
                if self.wants(x) {
                    let s = out.data();
                    let dot: f64 = s.iter().zip(g).map(|(a, b)| a * b).sum();
                    let dx = self.slot(x);
                    for ((d, &si), &gi) in dx.iter_mut().zip(s).zip(g) {
                        *d += si * (gi - dot);
                    }
                }
            }
            Op::Scale { x, factor } => {
                let (x, factor) = (*x, *factor);
                if self.wants(x) {
                    axpy(self.slot(x), factor, g);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                if self.wants(a) {
                    add_into(self.slot(a), g);
                }
                if self.wants(b) {
                    add_into(self.slot(b), g);
                }
            }
            Op::WeightedSum { weights, items } => {
                let weights = *weights;
                let w = graph.value(weights).data();
                if self.wants(weights) {
                    let dots: Vec<f64> = items
                        .iter()
                        .map(|&it| graph.value(it).data().iter().zip(g).map(|(a, b)| a * b).sum())
                        .collect();
                    add_into(self.slot(weights), &dots);
                }
                for (&item, &wi) in items.iter().zip(w) {
                    if self.wants(item) && wi != 0.0 {
                        axpy(self.slot(item), wi, g);
                    }
                }
            }
            Op::Sum(x) => {
                let x = *x;
                if self.wants(x) {
                    let g0 = g[0];
                    self.slot(x).iter_mut().for_each(|d| *d += g0);
                }
            }
            Op::CrossEntropy { logits, target } => {
                let (logits, target) = (*logits, *target);
                if self.wants(logits) {
                    let probs = ops::softmax(graph.value(logits).data());
                    let g0 = g[0];
                    let dl = self.slot(logits);
                    for (i, (d, p)) in dl.iter_mut().zip(probs).enumerate() {
                        let onehot = if i == target { 1.0 } else { 0.0 };
                        *d += g0 * (p - onehot);
                    }
                }
            }
            Op::Huber {
                pred,
                target,
                delta,
            } => {
                let (pred, delta) = (*pred, *delta);
                if self.wants(pred) {
                    let ps = graph.value(pred).data();
                    let scale = g[0] / ps.len() as f64;
                    let dp = self.slot(pred);
                    for ((d, &p), &t) in dp.iter_mut().zip(ps).zip(target.data()) {
                        let r = t - p;
                        let dr = if r.abs() <= delta { r } else { delta * r.signum() };
                        // d/dpred of the residual is -1.
                        *d -= scale * dr;
                    }
                }
            }
        }
        Ok(())
    }
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

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, s) in dst.iter_mut().zip(x) {
        *d += a * s;
    }
}
