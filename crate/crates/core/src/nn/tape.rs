//! Reverse-mode differentiation over a recorded tape of tensor operations.
//!
//! Network code is written once against the [`Graph`] trait and runs either
//! on a [`Tape`] (recording, for training) or on [`Eager`] (no recording;
//! intermediates are dropped as soon as they go out of scope).

use std::rc::Rc;

use super::ops;
use super::Tensor;
use crate::error::{Error, Result};

/// The operations a network forward pass is built from.
pub trait Graph {
    type Node: Clone;

    fn constant(&mut self, t: Tensor) -> Self::Node;
    fn value<'a>(&'a self, n: &'a Self::Node) -> &'a Tensor;
    fn conv2d(&mut self, x: &Self::Node, w: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn transposed_conv2d(&mut self, x: &Self::Node, w: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn concat_channels(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn narrow_channels(&mut self, x: &Self::Node, start: usize, len: usize) -> Result<Self::Node>;
    fn upsample_nearest(&mut self, x: &Self::Node, factor: usize) -> Self::Node;
    /// `scale * x + shift`, elementwise.
    fn affine(&mut self, x: &Self::Node, scale: f64, shift: f64) -> Self::Node;
}

/// Non-recording evaluation.
#[derive(Debug, Default)]
pub struct Eager;

impl Graph for Eager {
    type Node = Rc<Tensor>;

    fn constant(&mut self, t: Tensor) -> Self::Node {
        Rc::new(t)
    }

    fn value<'a>(&'a self, n: &'a Self::Node) -> &'a Tensor {
        n
    }

    fn conv2d(&mut self, x: &Self::Node, w: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(ops::conv2d(x, w, b)?))
    }

    fn transposed_conv2d(&mut self, x: &Self::Node, w: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(ops::transposed_conv2d(x, w, b)?))
    }

    fn relu(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(ops::relu(x))
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(ops::add(a, b)?))
    }

    fn concat_channels(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Rc::new(ops::concat_channels(a, b)?))
    }

    fn narrow_channels(&mut self, x: &Self::Node, start: usize, len: usize) -> Result<Self::Node> {
        Ok(Rc::new(ops::narrow_channels(x, start, len)?))
    }

    fn upsample_nearest(&mut self, x: &Self::Node, factor: usize) -> Self::Node {
        Rc::new(ops::upsample_nearest(x, factor))
    }

    fn affine(&mut self, x: &Self::Node, scale: f64, shift: f64) -> Self::Node {
        Rc::new(x.map(|v| scale * v + shift))
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var },
    TConv { x: Var, w: Var, b: Var },
    Relu(Var),
    Add(Var, Var),
    Concat(Var, Var),
    Narrow { x: Var, start: usize },
    Upsample { x: Var, factor: usize },
    Affine { x: Var, scale: f64 },
    MeanAbsError { x: Var, target: Tensor },
    SumAll(Var),
    WeightedSum { x: Var, weights: Tensor },
    SumScalars(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], retained for leaves only.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. Gradients are reported for leaves marked `requires_grad`.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn get(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// `mean(|x - target|)` as a `[1,1,1,1]` scalar.
    pub fn mean_abs_error(&mut self, x: Var, target: &Tensor) -> Result<Var> {
        let xv = self.get(x);
        if xv.shape() != target.shape() {
            return Err(Error::Shape(format!("loss: {:?} vs target {:?}", xv.shape(), target.shape())));
        }
        if xv.is_empty() {
            return Err(Error::Shape("loss over an empty tensor".into()));
        }
        let s: f64 = xv.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum();
        let v = s / xv.len() as f64;
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::MeanAbsError { x, target: target.clone() }, rg))
    }

    /// Sum of all elements of `x`.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = self.get(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(v), Op::SumAll(x), rg)
    }

    /// `sum(x * weights)` for a constant `weights` of the same shape.
    pub fn weighted_sum(&mut self, x: Var, weights: &Tensor) -> Result<Var> {
        let xv = self.get(x);
        if xv.shape() != weights.shape() {
            return Err(Error::Shape(format!("weighted_sum: {:?} vs {:?}", xv.shape(), weights.shape())));
        }
        let v = xv.dot(weights);
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::WeightedSum { x, weights: weights.clone() }, rg))
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &x in xs {
            let t = self.get(x);
            if t.len() != 1 {
                return Err(Error::Shape(format!("sum_scalars: operand has shape {:?}", t.shape())));
            }
            total += t.data()[0];
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(Tensor::scalar(total), Op::SumScalars(xs.to_vec()), rg))
    }

    /// Propagates d(root)/d(node) back through the tape. `root` must be a scalar.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.get(root);
        if rv.len() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar root, got shape {:?}", rv.shape())));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Conv { x, w, b } => {
                    let (gx, gw, gb) = ops::conv2d_grads(self.get(*x), self.get(*w), &g, self.rg(*x))?;
                    if let Some(gx) = gx {
                        self.accumulate(&mut grads, *x, gx);
                    }
                    self.accumulate(&mut grads, *w, gw);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::TConv { x, w, b } => {
                    let (gx, gw, gb) = ops::transposed_conv2d_grads(self.get(*x), self.get(*w), &g, self.rg(*x))?;
                    if let Some(gx) = gx {
                        self.accumulate(&mut grads, *x, gx);
                    }
                    self.accumulate(&mut grads, *w, gw);
                    self.accumulate(&mut grads, *b, gb);
                }
                Op::Relu(x) => {
                    let mut gx = g;
                    for (gv, &out) in gx.data_mut().iter_mut().zip(node.value.data()) {
                        if out <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    self.accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    if self.rg(*a) && self.rg(*b) {
                        self.accumulate(&mut grads, *a, g.clone());
                    } else if self.rg(*a) {
                        self.accumulate(&mut grads, *a, g);
                        continue;
                    }
                    self.accumulate(&mut grads, *b, g);
                }
                Op::Concat(a, b) => {
                    let ca = self.get(*a).c();
                    let cb = self.get(*b).c();
                    self.accumulate(&mut grads, *a, ops::narrow_channels(&g, 0, ca)?);
                    self.accumulate(&mut grads, *b, ops::narrow_channels(&g, ca, cb)?);
                }
                Op::Narrow { x, start } => {
                    if self.rg(*x) {
                        let xs = self.get(*x).shape();
                        let mut gx = Tensor::zeros(xs);
                        let plane = xs[2] * xs[3];
                        let (full, part) = (xs[1] * plane, g.c() * plane);
                        for n in 0..xs[0] {
                            gx.data_mut()[n * full + start * plane..][..part].copy_from_slice(g.sample(n));
                        }
                        self.accumulate(&mut grads, *x, gx);
                    }
                }
                Op::Upsample { x, factor } => {
                    self.accumulate(&mut grads, *x, ops::upsample_nearest_adjoint(&g, *factor));
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    self.accumulate(&mut grads, *x, g.map(|v| s * v));
                }
                Op::MeanAbsError { x, target } => {
                    let xv = self.get(*x);
                    let k = g.data()[0] / xv.len() as f64;
                    let gx = xv
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(a, b)| {
                            let d = a - b;
                            if d > 0.0 {
                                k
                            } else if d < 0.0 {
                                -k
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    self.accumulate(&mut grads, *x, Tensor::from_vec(xv.shape(), gx)?);
                }
                Op::SumAll(x) => {
                    let xs = self.get(*x).shape();
                    self.accumulate(&mut grads, *x, Tensor::full(xs, g.data()[0]));
                }
                Op::WeightedSum { x, weights } => {
                    let k = g.data()[0];
                    self.accumulate(&mut grads, *x, weights.map(|w| k * w));
                }
                Op::SumScalars(xs) => {
                    for &x in xs {
                        self.accumulate(&mut grads, x, g.clone());
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

impl Graph for Tape {
    type Node = Var;

    fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    fn value<'a>(&'a self, n: &'a Var) -> &'a Tensor {
        self.get(*n)
    }

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let v = ops::conv2d(self.get(*x), self.get(*w), self.get(*b))?;
        let rg = self.rg(*x) || self.rg(*w) || self.rg(*b);
        Ok(self.push(v, Op::Conv { x: *x, w: *w, b: *b }, rg))
    }

    fn transposed_conv2d(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let v = ops::transposed_conv2d(self.get(*x), self.get(*w), self.get(*b))?;
        let rg = self.rg(*x) || self.rg(*w) || self.rg(*b);
        Ok(self.push(v, Op::TConv { x: *x, w: *w, b: *b }, rg))
    }

    fn relu(&mut self, x: &Var) -> Var {
        let v = ops::relu(self.get(*x));
        let rg = self.rg(*x);
        self.push(v, Op::Relu(*x), rg)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = ops::add(self.get(*a), self.get(*b))?;
        let rg = self.rg(*a) || self.rg(*b);
        Ok(self.push(v, Op::Add(*a, *b), rg))
    }

    fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let v = ops::concat_channels(self.get(*a), self.get(*b))?;
        let rg = self.rg(*a) || self.rg(*b);
        Ok(self.push(v, Op::Concat(*a, *b), rg))
    }

    fn narrow_channels(&mut self, x: &Var, start: usize, len: usize) -> Result<Var> {
        let v = ops::narrow_channels(self.get(*x), start, len)?;
        let rg = self.rg(*x);
        Ok(self.push(v, Op::Narrow { x: *x, start }, rg))
    }

    fn upsample_nearest(&mut self, x: &Var, factor: usize) -> Var {
        let v = ops::upsample_nearest(self.get(*x), factor);
        let rg = self.rg(*x);
        self.push(v, Op::Upsample { x: *x, factor }, rg)
    }

    fn affine(&mut self, x: &Var, scale: f64, shift: f64) -> Var {
        let v = self.get(*x).map(|t| scale * t + shift);
        let rg = self.rg(*x);
        self.push(v, Op::Affine { x: *x, scale }, rg)
    }
}
