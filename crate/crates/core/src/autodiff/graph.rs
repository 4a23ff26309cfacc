//! Taped computation graph with reverse-mode adjoints and an R-operator pass.
//!
//! A graph built with [`Graph::with_tangents`] carries a directional derivative
//! (the "R-value") next to every value. Running [`Graph::backward`] on such a
//! graph propagates both the adjoint and its directional derivative, so the
//! R-adjoint of a parameter leaf is exactly the Hessian-vector product.

use super::kernels::{self, ConvGeom};
use crate::error::{Error, Result};
use crate::tensor::{copy_region, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Exp,
    Log,
    Sigmoid,
    Tanh,
    /// Negative-branch slope; the derivative at zero is taken as 1.
    LeakyRelu(f64),
    /// `ln(1 + e^x)`, evaluated without overflow.
    Softplus,
    Pow(f64),
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Unary {
    fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::LeakyRelu(s) => {
                if x >= 0.0 {
                    x
                } else {
                    s * x
                }
            }
            Unary::Softplus => softplus(x),
            Unary::Pow(p) => x.powf(p),
        }
    }

    fn d1(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::LeakyRelu(s) => {
                if x >= 0.0 {
                    1.0
                } else {
                    s
                }
            }
            Unary::Softplus => sigmoid(x),
            Unary::Pow(p) => p * x.powf(p - 1.0),
        }
    }

    fn d2(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Exp => y,
            Unary::Log => -1.0 / (x * x),
            Unary::Sigmoid => y * (1.0 - y) * (1.0 - 2.0 * y),
            Unary::Tanh => -2.0 * y * (1.0 - y * y),
            Unary::LeakyRelu(_) => 0.0,
            Unary::Softplus => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Unary::Pow(p) => p * (p - 1.0) * x.powf(p - 2.0),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::LeakyRelu(_) => "leaky_relu",
            Unary::Softplus => "softplus",
            Unary::Pow(_) => "pow",
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Reshape(NodeId),
    Pad(NodeId, Vec<(usize, usize)>),
    Slice(NodeId, Vec<usize>),
    Concat(Vec<NodeId>, usize),
    Sum(NodeId),
    Mean(NodeId),
    MeanLast(NodeId),
    Unary(NodeId, Unary),
    Conv(NodeId, NodeId, ConvGeom),
    AddChannel(NodeId, NodeId),
    MulChannel(NodeId, NodeId),
    ChannelMean(NodeId),
    MulScalar(NodeId, NodeId),
    Shift(NodeId, usize, isize),
    Upsample(NodeId, usize),
    LogSoftmax(NodeId),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Reshape(..) => "reshape",
            Op::Pad(..) => "pad",
            Op::Slice(..) => "slice",
            Op::Concat(..) => "concat",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanLast(..) => "mean_last",
            Op::Unary(_, u) => u.name(),
            Op::Conv(..) => "conv",
            Op::AddChannel(..) => "add_channel",
            Op::MulChannel(..) => "mul_channel",
            Op::ChannelMean(..) => "channel_mean",
            Op::MulScalar(..) => "mul_scalar",
            Op::Shift(..) => "temporal_shift",
            Op::Upsample(..) => "upsample",
            Op::LogSoftmax(..) => "log_softmax",
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::Conv(a, b, _)
            | Op::AddChannel(a, b)
            | Op::MulChannel(a, b)
            | Op::MulScalar(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Reshape(a)
            | Op::Pad(a, _)
            | Op::Slice(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanLast(a)
            | Op::Unary(a, _)
            | Op::ChannelMean(a)
            | Op::Shift(a, ..)
            | Op::Upsample(a, _)
            | Op::LogSoftmax(a) => vec![*a],
            Op::Concat(parts, _) => parts.clone(),
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    tangent: Option<Tensor>,
    /// Depends on at least one variable leaf.
    active: bool,
}

/// Append-only computation tape.
pub struct Graph {
    nodes: Vec<Node>,
    tangents: bool,
    adjoints: Vec<Option<Tensor>>,
    r_adjoints: Vec<Option<Tensor>>,
    backward_done: bool,
    fault: Option<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

// Broadcasting helpers for channels-last layouts.

fn last_dim(t: &Tensor) -> usize {
    *t.shape().last().expect("rank >= 1")
}

fn bcast_last(v: &Tensor, like: &[usize]) -> Tensor {
    let c = *like.last().unwrap();
    let rows = like.iter().product::<usize>() / c;
    let mut data = Vec::with_capacity(rows * c);
    for _ in 0..rows {
        data.extend_from_slice(v.data());
    }
    Tensor::new(like.to_vec(), data).unwrap()
}

fn reduce_rows(t: &Tensor) -> Tensor {
    let c = last_dim(t);
    let mut out = vec![0.0; c];
    for row in t.data().chunks(c) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    Tensor::vector(out)
}

fn sum_last(t: &Tensor) -> Tensor {
    let c = last_dim(t);
    let data: Vec<f64> = t.data().chunks(c).map(|r| r.iter().sum()).collect();
    let mut shape = t.shape()[..t.rank() - 1].to_vec();
    if shape.is_empty() {
        shape.push(1);
    }
    Tensor::new(shape, data).unwrap()
}

fn expand_last(t: &Tensor, like: &[usize]) -> Tensor {
    let c = *like.last().unwrap();
    let data: Vec<f64> = t
        .data()
        .iter()
        .flat_map(|&x| std::iter::repeat_n(x, c))
        .collect();
    Tensor::new(like.to_vec(), data).unwrap()
}

fn embed(g: &Tensor, start: &[usize], shape: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(shape);
    copy_region(g, &vec![0; g.rank()], &mut out, start, g.shape());
    out
}

fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    a.mul(b).expect("shape checked at construction")
}

fn add(a: &Tensor, b: &Tensor) -> Tensor {
    a.add(b).expect("shape checked at construction")
}

fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    a.matmul(b).expect("shape checked at construction")
}

fn tr(a: &Tensor) -> Tensor {
    a.transpose2d().expect("rank-2")
}

type Contribution = (NodeId, Tensor, Option<Tensor>);

impl Graph {
    /// Plain graph: values and adjoints only.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            tangents: false,
            adjoints: Vec::new(),
            r_adjoints: Vec::new(),
            backward_done: false,
            fault: None,
        }
    }

    /// Graph that also carries R-values for Hessian-vector products.
    pub fn with_tangents() -> Self {
        Graph {
            tangents: true,
            ..Graph::new()
        }
    }

    /// Scale the reverse rule of every node of `op_kind` by 1.5.
    ///
    /// Only useful for exercising the gradient checkers against a known-bad rule.
    pub fn with_fault(mut self, op_kind: &str) -> Self {
        self.fault = Some(op_kind.to_string());
        self
    }

    pub fn has_tangents(&self) -> bool {
        self.tangents
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn tangent(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].tangent.as_ref()
    }

    /// Whether `id` depends on a variable leaf (only those receive adjoints).
    pub fn is_active(&self, id: NodeId) -> bool {
        self.nodes[id.0].active
    }

    pub fn op_kind(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.kind()
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents()
    }

    pub fn backward_done(&self) -> bool {
        self.backward_done
    }

    /// Adjoint after [`Graph::backward`]; `None` for nodes the loss does not reach.
    pub fn adjoint(&self, id: NodeId) -> Option<&Tensor> {
        self.adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    /// Directional derivative of the adjoint (tangent graphs only).
    pub fn r_adjoint(&self, id: NodeId) -> Option<&Tensor> {
        self.r_adjoints.get(id.0).and_then(|a| a.as_ref())
    }

    fn push(&mut self, op: Op, value: Tensor, tangent: Option<Tensor>) -> NodeId {
        debug_assert!(op.parents().iter().all(|p| p.0 < self.nodes.len()));
        let active = op.parents().iter().any(|p| self.nodes[p.0].active);
        self.nodes.push(Node {
            op,
            value,
            tangent,
            active,
        });
        self.backward_done = false;
        NodeId(self.nodes.len() - 1)
    }

    fn tan(&self, id: NodeId) -> &Tensor {
        self.nodes[id.0].tangent.as_ref().expect("tangent graph")
    }

    /// Leaf with zero tangent.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let tangent = self.tangents.then(|| Tensor::zeros(t.shape()));
        self.push(Op::Leaf, t, tangent)
    }

    /// Leaf with an explicit tangent direction (ignored on plain graphs).
    pub fn variable(&mut self, t: Tensor, tangent: Option<Tensor>) -> Result<NodeId> {
        let tangent = match (self.tangents, tangent) {
            (false, _) => None,
            (true, Some(d)) => {
                if d.shape() != t.shape() {
                    return Err(Error::shape("variable tangent", t.shape(), d.shape()));
                }
                Some(d)
            }
            (true, None) => Some(Tensor::zeros(t.shape())),
        };
        let id = self.push(Op::Leaf, t, tangent);
        self.nodes[id.0].active = true;
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        let t = self.tangents.then(|| add(self.tan(a), self.tan(b)));
        Ok(self.push(Op::Add(a, b), v, t))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        let t = self
            .tangents
            .then(|| self.tan(a).sub(self.tan(b)).unwrap());
        Ok(self.push(Op::Sub(a, b), v, t))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        let t = self.tangents.then(|| {
            add(
                &mul(self.tan(a), self.value(b)),
                &mul(self.value(a), self.tan(b)),
            )
        });
        Ok(self.push(Op::Mul(a, b), v, t))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        let t = self.tangents.then(|| self.tan(a).scale(c));
        self.push(Op::Scale(a, c), v, t)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let t = self.tangents.then(|| {
            add(
                &matmul(self.tan(a), self.value(b)),
                &matmul(self.value(a), self.tan(b)),
            )
        });
        Ok(self.push(Op::MatMul(a, b), v, t))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        let t = self.tangents.then(|| self.tan(a).reshape(shape).unwrap());
        Ok(self.push(Op::Reshape(a), v, t))
    }

    pub fn pad(&mut self, a: NodeId, pads: &[(usize, usize)]) -> Result<NodeId> {
        let v = self.value(a).pad(pads)?;
        let t = self.tangents.then(|| self.tan(a).pad(pads).unwrap());
        Ok(self.push(Op::Pad(a, pads.to_vec()), v, t))
    }

    pub fn slice(&mut self, a: NodeId, start: &[usize], extent: &[usize]) -> Result<NodeId> {
        let v = self.value(a).slice(start, extent)?;
        let t = self
            .tangents
            .then(|| self.tan(a).slice(start, extent).unwrap());
        Ok(self.push(Op::Slice(a, start.to_vec()), v, t))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Tensor::concat(&vals, axis)?;
        let t = self.tangents.then(|| {
            let ts: Vec<&Tensor> = parts.iter().map(|&p| self.tan(p)).collect();
            Tensor::concat(&ts, axis).unwrap()
        });
        Ok(self.push(Op::Concat(parts.to_vec(), axis), v, t))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        let t = self.tangents.then(|| Tensor::scalar(self.tan(a).sum()));
        self.push(Op::Sum(a), v, t)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).mean());
        let t = self.tangents.then(|| Tensor::scalar(self.tan(a).mean()));
        self.push(Op::Mean(a), v, t)
    }

    /// Mean over the last axis.
    pub fn mean_last(&mut self, a: NodeId) -> NodeId {
        let n = last_dim(self.value(a)) as f64;
        let v = sum_last(self.value(a)).scale(1.0 / n);
        let t = self
            .tangents
            .then(|| sum_last(self.tan(a)).scale(1.0 / n));
        self.push(Op::MeanLast(a), v, t)
    }

    pub fn unary(&mut self, a: NodeId, u: Unary) -> NodeId {
        let x = self.value(a);
        let v = x.map(|xi| u.eval(xi));
        let t = self.tangents.then(|| {
            let d: Vec<f64> = x
                .data()
                .iter()
                .zip(v.data())
                .zip(self.tan(a).data())
                .map(|((&xi, &yi), &ti)| u.d1(xi, yi) * ti)
                .collect();
            Tensor::new(x.shape().to_vec(), d).unwrap()
        });
        self.push(Op::Unary(a, u), v, t)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Unary::Exp)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Unary::Log)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Unary::Sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Unary::Tanh)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.unary(a, Unary::LeakyRelu(slope))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Unary::Softplus)
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        self.unary(a, Unary::Pow(p))
    }

    /// Batched correlation; see [`kernels::conv_forward`] for layouts.
    pub fn conv(&mut self, x: NodeId, w: NodeId, geom: ConvGeom) -> Result<NodeId> {
        let v = kernels::conv_forward(self.value(x), self.value(w), &geom)?;
        let t = if self.tangents {
            let a = kernels::conv_forward(self.tan(x), self.value(w), &geom)?;
            let b = kernels::conv_forward(self.value(x), self.tan(w), &geom)?;
            Some(add(&a, &b))
        } else {
            None
        };
        Ok(self.push(Op::Conv(x, w, geom), v, t))
    }

    /// `x + b` with `b` of shape `[C]` broadcast over the last axis.
    pub fn add_channel(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_channel("add_channel", x, b)?;
        let shape = self.value(x).shape().to_vec();
        let v = add(self.value(x), &bcast_last(self.value(b), &shape));
        let t = self
            .tangents
            .then(|| add(self.tan(x), &bcast_last(self.tan(b), &shape)));
        Ok(self.push(Op::AddChannel(x, b), v, t))
    }

    /// `x * s` with `s` of shape `[C]` broadcast over the last axis.
    pub fn mul_channel(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        self.check_channel("mul_channel", x, s)?;
        let shape = self.value(x).shape().to_vec();
        let sb = bcast_last(self.value(s), &shape);
        let v = mul(self.value(x), &sb);
        let t = self.tangents.then(|| {
            add(
                &mul(self.tan(x), &sb),
                &mul(self.value(x), &bcast_last(self.tan(s), &shape)),
            )
        });
        Ok(self.push(Op::MulChannel(x, s), v, t))
    }

    fn check_channel(&self, op: &'static str, x: NodeId, c: NodeId) -> Result<()> {
        let (xs, cs) = (self.value(x).shape(), self.value(c).shape());
        if cs.len() != 1 || cs[0] != *xs.last().unwrap() {
            return Err(Error::shape(op, xs, cs));
        }
        Ok(())
    }

    /// Per-channel mean over every axis but the last; output `[C]`.
    pub fn channel_mean(&mut self, x: NodeId) -> NodeId {
        let rows = (self.value(x).len() / last_dim(self.value(x))) as f64;
        let v = reduce_rows(self.value(x)).scale(1.0 / rows);
        let t = self
            .tangents
            .then(|| reduce_rows(self.tan(x)).scale(1.0 / rows));
        self.push(Op::ChannelMean(x), v, t)
    }

    /// `x * s` for a single-element `s`.
    pub fn mul_scalar(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let sv = self
            .value(s)
            .item()
            .map_err(|_| Error::shape("mul_scalar", self.value(x).shape(), self.value(s).shape()))?;
        let v = self.value(x).scale(sv);
        let t = self.tangents.then(|| {
            let ts = self.tan(s).data()[0];
            add(&self.tan(x).scale(sv), &self.value(x).scale(ts))
        });
        Ok(self.push(Op::MulScalar(x, s), v, t))
    }

    /// See [`kernels::temporal_shift`].
    pub fn temporal_shift(&mut self, x: NodeId, fold: usize, steps: isize) -> Result<NodeId> {
        let v = kernels::temporal_shift(self.value(x), fold, steps)?;
        let t = if self.tangents {
            Some(kernels::temporal_shift(self.tan(x), fold, steps)?)
        } else {
            None
        };
        Ok(self.push(Op::Shift(x, fold, steps), v, t))
    }

    pub fn upsample(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        let v = kernels::upsample_spatial(self.value(x), factor)?;
        let t = if self.tangents {
            Some(kernels::upsample_spatial(self.tan(x), factor)?)
        } else {
            None
        };
        Ok(self.push(Op::Upsample(x, factor), v, t))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let c = last_dim(xv);
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|r| (r - m).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|r| r - lse));
        }
        let v = Tensor::new(xv.shape().to_vec(), out).unwrap();
        let t = self.tangents.then(|| {
            let p = v.map(f64::exp);
            let tx = self.tan(x);
            let s = expand_last(&sum_last(&mul(&p, tx)), tx.shape());
            tx.sub(&s).unwrap()
        });
        self.push(Op::LogSoftmax(x), v, t)
    }

    /// Reverse sweep from a single-element `loss`; on tangent graphs also
    /// propagates R-adjoints.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let n = self.nodes.len();
        let mut adj: Vec<Option<Tensor>> = vec![None; n];
        let mut radj: Vec<Option<Tensor>> = vec![None; n];
        adj[loss.0] = Some(Tensor::ones(self.value(loss).shape()));
        if self.tangents {
            radj[loss.0] = Some(Tensor::zeros(self.value(loss).shape()));
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].active {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let rg = radj[i].take();
            let mut contribs = self.vjp(i, &g, rg.as_ref())?;
            if self.fault.as_deref() == Some(self.nodes[i].op.kind()) {
                for c in &mut contribs {
                    c.1 = c.1.scale(1.5);
                }
            }
            for (p, gp, rgp) in contribs {
                if !self.nodes[p.0].active {
                    continue;
                }
                match &mut adj[p.0] {
                    Some(acc) => acc.add_assign(&gp),
                    slot => *slot = Some(gp),
                }
                if let Some(rgp) = rgp {
                    match &mut radj[p.0] {
                        Some(acc) => acc.add_assign(&rgp),
                        slot => *slot = Some(rgp),
                    }
                }
            }
            adj[i] = Some(g);
            radj[i] = rg;
        }
        self.adjoints = adj;
        self.r_adjoints = radj;
        self.backward_done = true;
        Ok(())
    }

    /// Contributions of node `i` to its parents' adjoints (and R-adjoints).
    fn vjp(&self, i: usize, g: &Tensor, rg: Option<&Tensor>) -> Result<Vec<Contribution>> {
        let node = &self.nodes[i];
        let r = self.tangents;
        // Applies the same linear map to the adjoint and its R-value.
        let lin = |p: NodeId, f: &dyn Fn(&Tensor) -> Tensor| -> Contribution {
            (p, f(g), rg.map(f))
        };
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![lin(*a, &|t| t.clone()), lin(*b, &|t| t.clone())],
            Op::Sub(a, b) => vec![lin(*a, &|t| t.clone()), lin(*b, &|t| t.scale(-1.0))],
            Op::Scale(a, c) => vec![lin(*a, &|t| t.scale(*c))],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = mul(g, vb);
                let gb = mul(g, va);
                let (rga, rgb) = if r {
                    let rg = rg.unwrap();
                    (
                        Some(add(&mul(rg, vb), &mul(g, self.tan(*b)))),
                        Some(add(&mul(rg, va), &mul(g, self.tan(*a)))),
                    )
                } else {
                    (None, None)
                };
                vec![(*a, ga, rga), (*b, gb, rgb)]
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = matmul(g, &tr(vb));
                let gb = matmul(&tr(va), g);
                let (rga, rgb) = if r {
                    let rg = rg.unwrap();
                    (
                        Some(add(&matmul(rg, &tr(vb)), &matmul(g, &tr(self.tan(*b))))),
                        Some(add(&matmul(&tr(va), rg), &matmul(&tr(self.tan(*a)), g))),
                    )
                } else {
                    (None, None)
                };
                vec![(*a, ga, rga), (*b, gb, rgb)]
            }
            Op::Reshape(a) => {
                let s = self.value(*a).shape().to_vec();
                vec![lin(*a, &|t| t.reshape(&s).unwrap())]
            }
            Op::Pad(a, pads) => {
                let s = self.value(*a).shape().to_vec();
                let lo: Vec<usize> = pads.iter().map(|p| p.0).collect();
                vec![lin(*a, &|t| t.slice(&lo, &s).unwrap())]
            }
            Op::Slice(a, start) => {
                let s = self.value(*a).shape().to_vec();
                vec![lin(*a, &|t| embed(t, start, &s))]
            }
            Op::Concat(parts, axis) => {
                let sizes: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[*axis]).collect();
                let gs = g.split(*axis, &sizes)?;
                let rgs = match rg {
                    Some(rg) => rg.split(*axis, &sizes)?.into_iter().map(Some).collect(),
                    None => vec![None; parts.len()],
                };
                parts
                    .iter()
                    .zip(gs)
                    .zip(rgs)
                    .map(|((p, g), rg)| (*p, g, rg))
                    .collect()
            }
            Op::Sum(a) => {
                let s = self.value(*a).shape().to_vec();
                vec![lin(*a, &|t| Tensor::full(&s, t.data()[0]))]
            }
            Op::Mean(a) => {
                let s = self.value(*a).shape().to_vec();
                let n = self.value(*a).len() as f64;
                vec![lin(*a, &|t| Tensor::full(&s, t.data()[0] / n))]
            }
            Op::MeanLast(a) => {
                let s = self.value(*a).shape().to_vec();
                let n = *s.last().unwrap() as f64;
                vec![lin(*a, &|t| expand_last(t, &s).scale(1.0 / n))]
            }
            Op::ChannelMean(a) => {
                let s = self.value(*a).shape().to_vec();
                let rows = (self.value(*a).len() / s.last().unwrap()) as f64;
                vec![lin(*a, &|t| bcast_last(t, &s).scale(1.0 / rows))]
            }
            Op::Shift(a, fold, steps) => vec![lin(*a, &|t| {
                kernels::temporal_shift(t, *fold, -*steps).unwrap()
            })],
            Op::Upsample(a, f) => vec![lin(*a, &|t| {
                kernels::upsample_spatial_adjoint(t, *f).unwrap()
            })],
            Op::Unary(a, u) => {
                let x = self.value(*a);
                let y = &node.value;
                let d1: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&xi, &yi)| u.d1(xi, yi))
                    .collect();
                let d1 = Tensor::new(x.shape().to_vec(), d1)?;
                let ga = mul(g, &d1);
                let rga = if r {
                    let d2: Vec<f64> = x
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&xi, &yi)| u.d2(xi, yi))
                        .collect();
                    let d2 = Tensor::new(x.shape().to_vec(), d2)?;
                    Some(add(&mul(rg.unwrap(), &d1), &mul(&mul(g, &d2), self.tan(*a))))
                } else {
                    None
                };
                vec![(*a, ga, rga)]
            }
            Op::Conv(x, w, geom) => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                let (ax, aw) = (self.nodes[x.0].active, self.nodes[w.0].active);
                let mut out = Vec::with_capacity(2);
                // Inactive operands have zero tangents, so their R-terms vanish.
                if ax {
                    let gx = kernels::conv_grad_input(g, vw, geom, vx.shape())?;
                    let rgx = match rg {
                        Some(rg) if r => {
                            let mut acc = kernels::conv_grad_input(rg, vw, geom, vx.shape())?;
                            if aw {
                                acc.add_assign(&kernels::conv_grad_input(g, self.tan(*w), geom, vx.shape())?);
                            }
                            Some(acc)
                        }
                        _ => None,
                    };
                    out.push((*x, gx, rgx));
                }
                if aw {
                    let gw = kernels::conv_grad_weight(vx, g, geom, vw.shape())?;
                    let rgw = match rg {
                        Some(rg) if r => {
                            let mut acc = kernels::conv_grad_weight(vx, rg, geom, vw.shape())?;
                            if ax {
                                acc.add_assign(&kernels::conv_grad_weight(self.tan(*x), g, geom, vw.shape())?);
                            }
                            Some(acc)
                        }
                        _ => None,
                    };
                    out.push((*w, gw, rgw));
                }
                out
            }
            Op::AddChannel(x, b) => vec![lin(*x, &|t| t.clone()), lin(*b, &reduce_rows)],
            Op::MulChannel(x, s) => {
                let shape = self.value(*x).shape().to_vec();
                let (vx, vs) = (self.value(*x), self.value(*s));
                let sb = bcast_last(vs, &shape);
                let gx = mul(g, &sb);
                let gs = reduce_rows(&mul(g, vx));
                let (rgx, rgs) = if r {
                    let rg = rg.unwrap();
                    let tsb = bcast_last(self.tan(*s), &shape);
                    (
                        Some(add(&mul(rg, &sb), &mul(g, &tsb))),
                        Some(reduce_rows(&add(&mul(rg, vx), &mul(g, self.tan(*x))))),
                    )
                } else {
                    (None, None)
                };
                vec![(*x, gx, rgx), (*s, gs, rgs)]
            }
            Op::MulScalar(x, s) => {
                let (vx, sv) = (self.value(*x), self.value(*s).data()[0]);
                let gx = g.scale(sv);
                let gs = Tensor::scalar(g.dot(vx)?).reshape(self.value(*s).shape())?;
                let (rgx, rgs) = if r {
                    let rg = rg.unwrap();
                    let ts = self.tan(*s).data()[0];
                    (
                        Some(add(&rg.scale(sv), &g.scale(ts))),
                        Some(
                            Tensor::scalar(rg.dot(vx)? + g.dot(self.tan(*x))?)
                                .reshape(self.value(*s).shape())?,
                        ),
                    )
                } else {
                    (None, None)
                };
                vec![(*x, gx, rgx), (*s, gs, rgs)]
            }
            Op::LogSoftmax(x) => {
                let p = node.value.map(f64::exp);
                let shape = p.shape().to_vec();
                let sg = expand_last(&sum_last(g), &shape);
                let gx = g.sub(&mul(&p, &sg))?;
                let rgx = if r {
                    let rg = rg.unwrap();
                    let ty = node.tangent.as_ref().unwrap();
                    let rp = mul(&p, ty);
                    let srg = expand_last(&sum_last(rg), &shape);
                    Some(rg.sub(&mul(&rp, &sg))?.sub(&mul(&p, &srg))?)
                } else {
                    None
                };
                vec![(*x, gx, rgx)]
            }
        };
        Ok(out)
    }
}
