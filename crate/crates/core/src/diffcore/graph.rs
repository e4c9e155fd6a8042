//! Per-iteration computation graph with reverse-mode gradients.
//!
//! A [`Graph`] borrows a [`ParamSet`] immutably, records every primitive as
//! a node holding its forward value, and [`Graph::backward`] walks the nodes
//! in reverse to produce a [`GradSet`]. Graphs are cheap and meant to be
//! rebuilt for every optimizer step.

use crate::error::{Error, Result};

use super::{gemm, GradSet, ParamId, ParamSet, Real, Tensor};

/// Additive constant inside the cross-entropy logarithm.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T> {
    Param(ParamId),
    Input,
    Affine { w: NodeId, b: NodeId, x: NodeId },
    Relu(NodeId),
    Sine { z: NodeId, omega: T },
    Finer { z: NodeId, omega: T },
    Softmax(NodeId),
    Lookup { table: NodeId, rows: Vec<usize> },
    SliceCols { z: NodeId, start: usize },
    Huber { pred: NodeId, target: Tensor<T>, delta: T },
    SoftmaxXent { logits: NodeId, target: Tensor<T>, probs: Tensor<T> },
    Sum(NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, T),
}

struct Node<T> {
    op: Op<T>,
    /// `None` for parameter leaves, whose values live in the [`ParamSet`].
    value: Option<Tensor<T>>,
    requires_grad: bool,
}

pub struct Graph<'p, T: Real> {
    params: &'p ParamSet<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamSet<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet<T> {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        match (&self.nodes[id.0].op, &self.nodes[id.0].value) {
            (_, Some(v)) => v,
            (Op::Param(p), None) => self.params.get(*p),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op<T>, value: Option<Tensor<T>>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Op::Param(id), None, true)
    }

    /// Constant leaf; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> NodeId {
        self.push(Op::Input, Some(t), false)
    }

    /// `x·Wᵀ + b` for `W: out×in`, `b: out`, `x: n×in`.
    pub fn affine(&mut self, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId> {
        let (wv, bv, xv) = (self.value(w), self.value(b), self.value(x));
        if wv.shape().len() != 2 || xv.shape().len() != 2 {
            return Err(Error::dim("affine", "weight and input must be matrices"));
        }
        let (out, inp) = (wv.rows(), wv.cols());
        let n = xv.rows();
        if xv.cols() != inp {
            return Err(Error::dim(
                "affine",
                format!("input has {} columns, weight expects {inp}", xv.cols()),
            ));
        }
        if bv.len() != out {
            return Err(Error::dim(
                "affine",
                format!("bias has {} entries, weight has {out} rows", bv.len()),
            ));
        }
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(bv.data());
        }
        gemm(n, inp, out, xv.data(), false, wv.data(), true, T::one(), &mut y);
        let rg = self.rg(w) || self.rg(b) || self.rg(x);
        let value = Tensor::matrix(n, out, y)?;
        Ok(self.push(Op::Affine { w, b, x }, Some(value), rg))
    }

    pub fn relu(&mut self, z: NodeId) -> NodeId {
        let v = self.value(z).map(|a| if a > T::zero() { a } else { T::zero() });
        let rg = self.rg(z);
        self.push(Op::Relu(z), Some(v), rg)
    }

    /// `sin(ω0·z)`.
    pub fn sine(&mut self, z: NodeId, omega: T) -> NodeId {
        let v = self.value(z).map(|a| (omega * a).act_sin());
        let rg = self.rg(z);
        self.push(Op::Sine { z, omega }, Some(v), rg)
    }

    /// `sin(ω0·(|z|+1)·z)`.
    pub fn finer(&mut self, z: NodeId, omega: T) -> NodeId {
        let v = self
            .value(z)
            .map(|a| (omega * (a.abs() + T::one()) * a).act_sin());
        let rg = self.rg(z);
        self.push(Op::Finer { z, omega }, Some(v), rg)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, z: NodeId) -> Result<NodeId> {
        let v = softmax_rows(self.value(z))?;
        let rg = self.rg(z);
        Ok(self.push(Op::Softmax(z), Some(v), rg))
    }

    /// Gathers rows of `table`.
    pub fn lookup(&mut self, table: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        let tv = self.value(table);
        let len = tv.rows();
        if let Some(&bad) = rows.iter().find(|&&r| r >= len) {
            return Err(Error::Index { index: bad, len });
        }
        let v = tv.select_rows(&rows);
        let rg = self.rg(table);
        Ok(self.push(Op::Lookup { table, rows }, Some(v), rg))
    }

    pub fn slice_cols(&mut self, z: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let v = self.value(z).slice_cols(start, end)?;
        let rg = self.rg(z);
        Ok(self.push(Op::SliceCols { z, start }, Some(v), rg))
    }

    /// Mean Huber loss of `pred` against a constant target.
    pub fn huber(&mut self, pred: NodeId, target: Tensor<T>, delta: T) -> Result<NodeId> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(Error::dim(
                "huber",
                format!("prediction {:?} vs target {:?}", pv.shape(), target.shape()),
            ));
        }
        let loss = huber_value(pv.data(), target.data(), delta);
        let rg = self.rg(pred);
        Ok(self.push(
            Op::Huber {
                pred,
                target,
                delta,
            },
            Some(Tensor::scalar(loss)),
            rg,
        ))
    }

    /// Softmax of `logits` followed by mean cross-entropy against `target`
    /// rows (one-hot labels or soft probabilities summing to one).
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: Tensor<T>) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.shape() != target.shape() || lv.shape().len() != 2 {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("logits {:?} vs target {:?}", lv.shape(), target.shape()),
            ));
        }
        let probs = softmax_rows(lv)?;
        let loss = cross_entropy_value(&probs, &target);
        let rg = self.rg(logits);
        Ok(self.push(
            Op::SoftmaxXent {
                logits,
                target,
                probs,
            },
            Some(Tensor::scalar(loss)),
            rg,
        ))
    }

    pub fn sum(&mut self, z: NodeId) -> NodeId {
        let s = self.value(z).data().iter().copied().sum();
        let rg = self.rg(z);
        self.push(Op::Sum(z), Some(Tensor::scalar(s)), rg)
    }

    /// Elementwise sum of two same-shaped nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(Error::dim(
                "add",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let v = Tensor::new(av.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), Some(v), rg))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(Op::Scale(a, c), Some(v), rg)
    }

    /// Reverse-mode gradients of a scalar node with respect to every
    /// parameter. Parameters not reachable from `loss` get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<GradSet<T>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut out = GradSet::zeros_like(self.params);
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Param(p) => {
                    for (acc, v) in out.get_mut(*p).data_mut().iter_mut().zip(g.data()) {
                        *acc += *v;
                    }
                }
                Op::Input => {}
                Op::Affine { w, b, x } => {
                    let wv = self.value(*w);
                    let xv = self.value(*x);
                    let (out_dim, in_dim, n) = (wv.rows(), wv.cols(), xv.rows());
                    if self.rg(*w) {
                        let mut dw = vec![T::zero(); out_dim * in_dim];
                        gemm(out_dim, n, in_dim, g.data(), true, xv.data(), false, T::zero(), &mut dw);
                        accumulate(&mut grads, *w, wv.shape(), dw);
                    }
                    if self.rg(*b) {
                        let mut db = vec![T::zero(); out_dim];
                        for row in g.data().chunks_exact(out_dim) {
                            for (acc, &v) in db.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        accumulate(&mut grads, *b, self.value(*b).shape(), db);
                    }
                    if self.rg(*x) {
                        let mut dx = vec![T::zero(); n * in_dim];
                        gemm(n, out_dim, in_dim, g.data(), false, wv.data(), false, T::zero(), &mut dx);
                        accumulate(&mut grads, *x, xv.shape(), dx);
                    }
                }
                Op::Relu(z) => {
                    let zv = self.value(*z);
                    let d = zv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&a, &gv)| if a > T::zero() { gv } else { T::zero() })
                        .collect();
                    accumulate(&mut grads, *z, zv.shape(), d);
                }
                Op::Sine { z, omega } => {
                    let zv = self.value(*z);
                    let w = *omega;
                    let d = zv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&a, &gv)| gv * w * (w * a).act_cos())
                        .collect();
                    accumulate(&mut grads, *z, zv.shape(), d);
                }
                Op::Finer { z, omega } => {
                    let zv = self.value(*z);
                    let w = *omega;
                    let two = T::lit(2.0);
                    let d = zv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&a, &gv)| {
                            let m = a.abs();
                            gv * w * (two * m + T::one()) * (w * (m + T::one()) * a).act_cos()
                        })
                        .collect();
                    accumulate(&mut grads, *z, zv.shape(), d);
                }
                Op::Softmax(z) => {
                    let p = node.value.as_ref().expect("softmax value");
                    let c = p.cols();
                    let mut d = Vec::with_capacity(p.len());
                    for (pr, gr) in p.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
                        let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        d.extend(pr.iter().zip(gr).map(|(&a, &b)| a * (b - dot)));
                    }
                    accumulate(&mut grads, *z, p.shape(), d);
                }
                Op::Lookup { table, rows } => {
                    let tv = self.value(*table);
                    let c = tv.cols();
                    let mut d = vec![T::zero(); tv.len()];
                    for (gr, &r) in g.data().chunks_exact(c.max(1)).zip(rows) {
                        for (acc, &v) in d[r * c..(r + 1) * c].iter_mut().zip(gr) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *table, tv.shape(), d);
                }
                Op::SliceCols { z, start } => {
                    let zv = self.value(*z);
                    let (c, w) = (zv.cols(), g.cols());
                    let mut d = vec![T::zero(); zv.len()];
                    for (r, gr) in g.data().chunks_exact(w.max(1)).enumerate() {
                        d[r * c + start..r * c + start + w].copy_from_slice(gr);
                    }
                    accumulate(&mut grads, *z, zv.shape(), d);
                }
                Op::Huber {
                    pred,
                    target,
                    delta,
                } => {
                    let pv = self.value(*pred);
                    let scale = g.item() / T::lit(pv.len() as f64);
                    let dl = *delta;
                    let d = pv
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &t)| (p - t).max(-dl).min(dl) * scale)
                        .collect();
                    accumulate(&mut grads, *pred, pv.shape(), d);
                }
                Op::SoftmaxXent {
                    logits,
                    target,
                    probs,
                } => {
                    let scale = g.item() / T::lit(probs.rows() as f64);
                    let d = probs
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(&p, &q)| (p - q) * scale)
                        .collect();
                    accumulate(&mut grads, *logits, probs.shape(), d);
                }
                Op::Sum(z) => {
                    let zv = self.value(*z);
                    accumulate(&mut grads, *z, zv.shape(), vec![g.item(); zv.len()]);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, self.value(*a).shape(), g.data().to_vec());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, self.value(*b).shape(), g.data().to_vec());
                    }
                }
                Op::Scale(a, c) => {
                    let d = g.data().iter().map(|&v| v * *c).collect();
                    accumulate(&mut grads, *a, self.value(*a).shape(), d);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], id: NodeId, shape: &[usize], d: Vec<T>) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (acc, v) in existing.data_mut().iter_mut().zip(d) {
                *acc += v;
            }
        }
        slot @ None => {
            *slot = Some(Tensor::new(shape.to_vec(), d).expect("gradient shape"));
        }
    }
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows<T: Real>(z: &Tensor<T>) -> Result<Tensor<T>> {
    let c = z.cols();
    if c == 0 || z.shape().len() != 2 {
        return Err(Error::dim("softmax", "need a matrix with at least one column"));
    }
    let mut out = Vec::with_capacity(z.len());
    for row in z.data().chunks_exact(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - max).exp()));
        let s: T = out[start..].iter().copied().sum();
        for v in &mut out[start..] {
            *v = *v / s;
        }
    }
    Tensor::new(z.shape().to_vec(), out)
}

pub(crate) fn huber_value<T: Real>(pred: &[T], target: &[T], delta: T) -> T {
    if pred.is_empty() {
        return T::zero();
    }
    let half = T::lit(0.5);
    let total: T = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let r = (p - t).abs();
            if r <= delta {
                half * r * r
            } else {
                delta * (r - half * delta)
            }
        })
        .sum();
    total / T::lit(pred.len() as f64)
}

pub(crate) fn cross_entropy_value<T: Real>(probs: &Tensor<T>, target: &Tensor<T>) -> T {
    let rows = probs.rows();
    if rows == 0 {
        return T::zero();
    }
    let eps = T::lit(LOG_EPS);
    let total: T = probs
        .data()
        .iter()
        .zip(target.data())
        .filter(|(_, &q)| q != T::zero())
        .map(|(&p, &q)| -q * (p + eps).ln())
        .sum();
    total / T::lit(rows as f64)
}
