//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value and the ids of its
//! parents. Nodes are only ever appended, so node order is a topological
//! order and the backward sweep simply walks the tape in reverse.

use std::borrow::Cow;

use super::tensor::{sigmoid, softmax_slice, Tensor};
use crate::error::{Error, Result};

/// Probability floor applied inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    Row(NodeId, usize),
    Concat(Vec<NodeId>),
    Slice(NodeId, usize),
    Dot(NodeId, NodeId),
    WeightedSum(NodeId, Vec<NodeId>),
    Sum(Vec<NodeId>),
    /// `-ln(max(p[k], floor))`
    NegLogPick(NodeId, usize),
    /// `KL(target || p)` with `0 ln 0 = 0`
    KlDiv(Vec<f64>, NodeId),
    /// Mean binary cross-entropy of probabilities against 0/1 targets.
    BceMean(Vec<f64>, NodeId),
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
}

/// A computation tape. Leaves may borrow parameter tensors for the
/// lifetime `'a`, so building a graph never copies model weights.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Result of a backward sweep: d(loss)/d(node) for every node that the loss
/// depends on through differentiable leaves.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `node`; `None` when the loss does not depend on it.
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to `node`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, node: NodeId) -> Tensor {
        self.get(node)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[node.0]))
    }

    /// Moves the gradient for `node` out of the table.
    pub fn take(&mut self, node: NodeId) -> Option<Tensor> {
        self.grads.get_mut(node.0).and_then(Option::take)
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.value(node).item()
    }

    /// A differentiable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Borrowed(t), true)
    }

    /// A differentiable leaf owning `t`.
    pub fn variable(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Owned(t), true)
    }

    /// A non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, Cow::Owned(t), false)
    }

    fn push(&mut self, op: Op, value: Cow<'a, Tensor>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn owned(&mut self, op: Op, value: Tensor, parents: &[NodeId]) -> NodeId {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(op, Cow::Owned(value), requires_grad)
    }

    fn vector_len(&self, op: &'static str, node: NodeId) -> Result<usize> {
        let shape = self.value(node).shape();
        if shape.len() != 1 {
            return Err(Error::dim(op, format!("expected a vector, got shape {shape:?}")));
        }
        Ok(shape[0])
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let (wt, xt) = (self.value(w), self.value(x));
        if wt.shape().len() != 2 {
            return Err(Error::dim("matvec", format!("matrix expected, got {:?}", wt.shape())));
        }
        let (m, n) = (wt.shape()[0], wt.shape()[1]);
        if xt.shape() != [n] {
            return Err(Error::dim(
                "matvec",
                format!("[{m}x{n}] times {:?}", xt.shape()),
            ));
        }
        let xd = xt.data();
        let out: Vec<f64> = (0..m)
            .map(|r| wt.row(r).iter().zip(xd).map(|(a, b)| a * b).sum())
            .collect();
        Ok(self.owned(Op::MatVec(w, x), Tensor::vector(out), &[w, x]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::dim("add", format!("{:?} + {:?}", at.shape(), bt.shape())));
        }
        let mut out = at.clone();
        out.add_assign(bt);
        Ok(self.owned(Op::Add(a, b), out, &[a, b]))
    }

    /// Sum of several same-shaped tensors.
    pub fn sum(&mut self, items: &[NodeId]) -> Result<NodeId> {
        let first = *items
            .first()
            .ok_or_else(|| Error::dim("sum", "no operands"))?;
        let mut out = self.value(first).clone();
        for &it in &items[1..] {
            let t = self.value(it);
            if t.shape() != out.shape() {
                return Err(Error::dim("sum", format!("{:?} + {:?}", out.shape(), t.shape())));
            }
            out.add_assign(t);
        }
        Ok(self.owned(Op::Sum(items.to_vec()), out, items))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(Error::dim("mul", format!("{:?} * {:?}", at.shape(), bt.shape())));
        }
        let data = at.data().iter().zip(bt.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(at.shape().to_vec(), data)?;
        Ok(self.owned(Op::Mul(a, b), out, &[a, b]))
    }

    pub fn scale(&mut self, a: NodeId, alpha: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale(alpha);
        self.owned(Op::Scale(a, alpha), out, &[a])
    }

    fn map(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let t = self.value(a);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        self.owned(op, out, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softmax(&mut self, u: NodeId) -> Result<NodeId> {
        self.vector_len("softmax", u)?;
        let out = Tensor::vector(softmax_slice(self.value(u).data()));
        Ok(self.owned(Op::Softmax(u), out, &[u]))
    }

    /// Embedding lookup: row `index` of matrix `table`, as a vector.
    pub fn row(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(table);
        if t.shape().len() != 2 || index >= t.shape()[0] {
            return Err(Error::dim(
                "row",
                format!("row {index} of {:?}", t.shape()),
            ));
        }
        let out = Tensor::vector(t.row(index).to_vec());
        Ok(self.owned(Op::Row(table, index), out, &[table]))
    }

    /// Concatenation of vectors (scalars count as length-1 vectors).
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no operands"));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() > 1 {
                return Err(Error::dim("concat", format!("non-vector operand {:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.owned(Op::Concat(parts.to_vec()), Tensor::vector(data), parts))
    }

    /// Contiguous sub-vector `[start, start + len)`.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let n = self.vector_len("slice", a)?;
        if len == 0 || start + len > n {
            return Err(Error::dim("slice", format!("[{start}, {}) of length {n}", start + len)));
        }
        let out = Tensor::vector(self.value(a).data()[start..start + len].to_vec());
        Ok(self.owned(Op::Slice(a, start), out, &[a]))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.vector_len("dot", a)?, self.vector_len("dot", b)?);
        if na != nb {
            return Err(Error::dim("dot", format!("{na} . {nb}")));
        }
        let v = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.owned(Op::Dot(a, b), Tensor::scalar(v), &[a, b]))
    }

    /// `sum_i weights[i] * items[i]` over same-length vectors.
    pub fn weighted_sum(&mut self, weights: NodeId, items: &[NodeId]) -> Result<NodeId> {
        let n = self.vector_len("weighted_sum", weights)?;
        if n != items.len() {
            return Err(Error::dim(
                "weighted_sum",
                format!("{n} weights for {} items", items.len()),
            ));
        }
        let d = self.vector_len("weighted_sum", items[0])?;
        let mut out = vec![0.0; d];
        let w = self.value(weights).data();
        for (&wi, &it) in w.iter().zip(items) {
            let t = self.value(it);
            if t.shape() != [d] {
                return Err(Error::dim("weighted_sum", format!("item {:?} vs [{d}]", t.shape())));
            }
            for (o, v) in out.iter_mut().zip(t.data()) {
                *o += wi * v;
            }
        }
        let mut parents = vec![weights];
        parents.extend_from_slice(items);
        Ok(self.owned(
            Op::WeightedSum(weights, items.to_vec()),
            Tensor::vector(out),
            &parents,
        ))
    }

    /// Cross-entropy of a probability vector against class `k`.
    pub fn neg_log_pick(&mut self, p: NodeId, k: usize) -> Result<NodeId> {
        let n = self.vector_len("neg_log_pick", p)?;
        if k >= n {
            return Err(Error::dim("neg_log_pick", format!("class {k} of {n}")));
        }
        let v = -self.value(p).data()[k].max(PROB_FLOOR).ln();
        Ok(self.owned(Op::NegLogPick(p, k), Tensor::scalar(v), &[p]))
    }

    /// `KL(target || p)`; `target` is a constant distribution.
    pub fn kl_div(&mut self, target: Vec<f64>, p: NodeId) -> Result<NodeId> {
        let n = self.vector_len("kl_div", p)?;
        if n != target.len() {
            return Err(Error::dim("kl_div", format!("target {} vs {n}", target.len())));
        }
        let v = kl_divergence(&target, self.value(p).data());
        Ok(self.owned(Op::KlDiv(target, p), Tensor::scalar(v), &[p]))
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`.
    pub fn bce_mean(&mut self, target: Vec<f64>, p: NodeId) -> Result<NodeId> {
        let n = self.vector_len("bce_mean", p)?;
        if n != target.len() {
            return Err(Error::dim("bce_mean", format!("target {} vs {n}", target.len())));
        }
        let v = bce_mean(&target, self.value(p).data());
        Ok(self.owned(Op::BceMean(target, p), Tensor::scalar(v), &[p]))
    }

    /// Reverse sweep from a scalar `loss`. The graph is not modified, so
    /// repeated calls return identical gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        for (idx, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[idx] = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node<'a>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatVec(w, x) => {
                let (wt, xt) = (self.value(*w), self.value(*x));
                if self.needs(*w) {
                    let gw = slot(grads, *w, wt);
                    let n = xt.len();
                    for (r, &gr) in gd.iter().enumerate() {
                        if gr == 0.0 {
                            continue;
                        }
                        for (o, v) in gw.row_mut(r)[..n].iter_mut().zip(xt.data()) {
                            *o += gr * v;
                        }
                    }
                }
                if self.needs(*x) {
                    let gx = slot(grads, *x, xt);
                    for (r, &gr) in gd.iter().enumerate() {
                        for (o, v) in gx.data_mut().iter_mut().zip(wt.row(r)) {
                            *o += gr * v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if self.needs(p) {
                        slot(grads, p, g).add_assign(g);
                    }
                }
            }
            Op::Sum(items) => {
                for &p in items {
                    if self.needs(p) {
                        slot(grads, p, g).add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let ga = slot(grads, *a, at);
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(gd).zip(bt.data()) {
                        *o += gi * bi;
                    }
                }
                if self.needs(*b) {
                    let gb = slot(grads, *b, bt);
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(gd).zip(at.data()) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, alpha) => {
                if self.needs(*a) {
                    slot(grads, *a, g).axpy(*alpha, g);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = node.value.data();
                    let ga = slot(grads, *a, g);
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(gd).zip(y) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = node.value.data();
                    let ga = slot(grads, *a, g);
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(gd).zip(y) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Softmax(u) => {
                if self.needs(*u) {
                    let y = node.value.data();
                    let gy: f64 = gd.iter().zip(y).map(|(a, b)| a * b).sum();
                    let gu = slot(grads, *u, g);
                    for ((o, gi), yi) in gu.data_mut().iter_mut().zip(gd).zip(y) {
                        *o += yi * (gi - gy);
                    }
                }
            }
            Op::Row(table, index) => {
                if self.needs(*table) {
                    let gt = slot(grads, *table, self.value(*table));
                    for (o, gi) in gt.row_mut(*index).iter_mut().zip(gd) {
                        *o += gi;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs(p) {
                        let gp = slot(grads, p, self.value(p));
                        for (o, gi) in gp.data_mut().iter_mut().zip(&gd[offset..offset + n]) {
                            *o += gi;
                        }
                    }
                    offset += n;
                }
            }
            Op::Slice(a, start) => {
                if self.needs(*a) {
                    let ga = slot(grads, *a, self.value(*a));
                    for (o, gi) in ga.data_mut()[*start..*start + gd.len()].iter_mut().zip(gd) {
                        *o += gi;
                    }
                }
            }
            Op::Dot(a, b) => {
                let s = gd[0];
                let (at, bt) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    slot(grads, *a, at).axpy(s, bt);
                }
                if self.needs(*b) {
                    slot(grads, *b, bt).axpy(s, at);
                }
            }
            Op::WeightedSum(weights, items) => {
                if self.needs(*weights) {
                    let gw: Vec<f64> = items
                        .iter()
                        .map(|&it| {
                            self.value(it)
                                .data()
                                .iter()
                                .zip(gd)
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect();
                    let slot_w = slot(grads, *weights, self.value(*weights));
                    for (o, v) in slot_w.data_mut().iter_mut().zip(gw) {
                        *o += v;
                    }
                }
                let w = self.value(*weights).data();
                for (&wi, &it) in w.iter().zip(items) {
                    if self.needs(it) {
                        slot(grads, it, g).axpy(wi, g);
                    }
                }
            }
            Op::NegLogPick(p, k) => {
                if self.needs(*p) {
                    let pk = self.value(*p).data()[*k];
                    // The floor makes the loss flat below it.
                    if pk > PROB_FLOOR {
                        let gp = slot(grads, *p, self.value(*p));
                        gp.data_mut()[*k] -= gd[0] / pk;
                    }
                }
            }
            Op::KlDiv(target, p) => {
                if self.needs(*p) {
                    let pt = self.value(*p);
                    let gp = slot(grads, *p, pt);
                    for ((o, &a), &q) in gp.data_mut().iter_mut().zip(target).zip(pt.data()) {
                        if a > 0.0 && q > PROB_FLOOR {
                            *o -= gd[0] * a / q;
                        }
                    }
                }
            }
            Op::BceMean(target, p) => {
                if self.needs(*p) {
                    let pt = self.value(*p);
                    let n = target.len() as f64;
                    let gp = slot(grads, *p, pt);
                    for ((o, &c), &q) in gp.data_mut().iter_mut().zip(target).zip(pt.data()) {
                        let q = q.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                        *o += gd[0] * (-c / q + (1.0 - c) / (1.0 - q)) / n;
                    }
                }
            }
        }
    }

    fn needs(&self, node: NodeId) -> bool {
        self.nodes[node.0].requires_grad
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], node: NodeId, like: &Tensor) -> &'g mut Tensor {
    grads[node.0].get_or_insert_with(|| Tensor::zeros_like(like))
}

/// `sum_i a_i ln(a_i / q_i)` with `0 ln 0 = 0` and `q` floored at [`PROB_FLOOR`].
pub fn kl_divergence(target: &[f64], q: &[f64]) -> f64 {
    target
        .iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &qi)| a * (a.ln() - qi.max(PROB_FLOOR).ln()))
        .sum()
}

/// Mean binary cross-entropy with probabilities clamped to `[floor, 1 - floor]`.
pub fn bce_mean(target: &[f64], q: &[f64]) -> f64 {
    let total: f64 = target
        .iter()
        .zip(q)
        .map(|(&c, &qi)| {
            let qi = qi.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            -(c * qi.ln() + (1.0 - c) * (1.0 - qi).ln())
        })
        .sum();
    total / target.len() as f64
}
