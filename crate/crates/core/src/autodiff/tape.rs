//! Reverse-mode differentiation over a linear record of primitive operations.
//!
//! Every primitive appends one node holding its forward value. Nodes only refer to
//! earlier nodes, so the record is already in topological order and the backward
//! pass is a single reverse sweep.

use super::kernels::{self, Conv1dDims};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    Relu(Var),
    Softmax(Var),
    Log(Var),
    Square(Var),
    Sqrt(Var),
    Concat(Vec<Var>, usize),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
        end: usize,
    },
    Reshape(Var),
    Conv1d {
        input: Var,
        weight: Var,
        dims: Conv1dDims,
    },
    Rodrigues(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one forward evaluation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; zeros when `var` does not influence the loss.
    pub fn get(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }

    pub fn try_get(&self, var: Var) -> Option<&Tensor> {
        self.grads[var.0].as_ref()
    }
}

/// Splits `shape` around `axis` into (outer, dim, inner) element counts.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn is_suffix(full: &[usize], tail: &[usize]) -> bool {
    tail.len() <= full.len() && full[full.len() - tail.len()..] == *tail
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Elementwise sum. `b` may also match a trailing suffix of `a`'s shape (bias add).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary_broadcast("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Elementwise difference with the same broadcasting rule as [`Tape::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary_broadcast("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    fn binary_broadcast(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !is_suffix(ta.shape(), tb.shape()) {
            return Err(Error::shape(op, ta.shape(), tb.shape()));
        }
        let n = tb.len();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % n]))
            .collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    /// Elementwise (Hadamard) product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape("mul", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Multiplication by a fixed constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        let rg = self.rg(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let value = Tensor::from_parts(vec![m, n], kernels::matmul(ta.data(), tb.data(), m, k, n));
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(&[a]);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.rg(&[a]);
        self.push(value, Op::Mean(a), rg)
    }

    fn reduce_axis(&self, a: Var, axis: usize, op: &'static str) -> Result<(Tensor, usize)> {
        let t = self.value(a);
        if axis >= t.rank() {
            return Err(Error::shape(op, t.shape(), &[axis]));
        }
        let (outer, dim, inner) = axis_split(t.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for d in 0..dim {
                let src = &t.data()[(o * dim + d) * inner..(o * dim + d + 1) * inner];
                for (acc, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += x;
                }
            }
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = 1;
        Ok((Tensor::from_parts(shape, out), dim))
    }

    /// Sum along `axis`, which is kept with size 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (value, _) = self.reduce_axis(a, axis, "sum_axis")?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SumAxis(a, axis), rg))
    }

    /// Mean along `axis`, which is kept with size 1.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (value, dim) = self.reduce_axis(a, axis, "mean_axis")?;
        let value = value.map(|x| x / dim as f64);
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::MeanAxis(a, axis), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(value, Op::Relu(a), rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let cols = *t.shape().last().unwrap();
        let value = Tensor::from_parts(t.shape().to_vec(), kernels::softmax_rows(t.data(), cols));
        let rg = self.rg(&[a]);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Natural logarithm.
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.push(value, Op::Log(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        let rg = self.rg(&[a]);
        self.push(value, Op::Square(a), rg)
    }

    /// Square root. The backward rule at an exact zero uses the zero subgradient,
    /// which keeps Euclidean norms differentiable at the origin.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.rg(&[a]);
        self.push(value, Op::Sqrt(a), rg)
    }

    /// Euclidean norm of all elements, composed from primitives.
    pub fn norm(&mut self, a: Var) -> Var {
        let sq = self.square(a);
        let s = self.sum(sq);
        self.sqrt(s)
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat of zero tensors".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.value(*p).shape();
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = self.value(*p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Concat(parts.to_vec(), axis),
            rg,
        ))
    }

    /// Sub-range `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() || start >= end || end > t.shape()[axis] {
            return Err(Error::shape("slice", t.shape(), &[axis, start, end]));
        }
        let (outer, dim, inner) = axis_split(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            data.extend_from_slice(&t.data()[(o * dim + start) * inner..(o * dim + end) * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = end - start;
        let rg = self.rg(&[a]);
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Slice {
                input: a,
                axis,
                start,
                end,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Batched time-major convolution: input `[B, T, Ci]`, weight `[K, Ci, Co]`,
    /// zero padding `pad` on both ends, output `[B, T', Co]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, stride: usize, pad: usize) -> Result<Var> {
        let (x, w) = (self.value(input), self.value(weight));
        if x.rank() != 3 || w.rank() != 3 || x.shape()[2] != w.shape()[1] {
            return Err(Error::shape("conv1d", x.shape(), w.shape()));
        }
        let (batch, len, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (kernel, c_out) = (w.shape()[0], w.shape()[2]);
        let out_len = kernels::conv1d_out_len(len, kernel, stride, pad)
            .ok_or_else(|| Error::shape("conv1d", x.shape(), w.shape()))?;
        let dims = Conv1dDims {
            batch,
            len,
            c_in,
            c_out,
            kernel,
            stride,
            pad,
            out_len,
        };
        let value = Tensor::from_parts(
            vec![batch, out_len, c_out],
            kernels::conv1d(x.data(), w.data(), &dims),
        );
        let rg = self.rg(&[input, weight]);
        Ok(self.push(
            value,
            Op::Conv1d {
                input,
                weight,
                dims,
            },
            rg,
        ))
    }

    /// Axis-angle 3-vector to a `[3, 3]` rotation matrix.
    pub fn rodrigues(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.len() != 3 {
            return Err(Error::shape("rodrigues", t.shape(), &[3]));
        }
        let d = t.data();
        let r = kernels::rodrigues([d[0], d[1], d[2]]);
        let rg = self.rg(&[a]);
        Ok(self.push(
            Tensor::from_parts(vec![3, 3], r.to_vec()),
            Op::Rodrigues(a),
            rg,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    ///
    /// The tape is not consumed; running the pass twice gives identical results.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        self.vjp(loss, Tensor::ones(lt.shape()))
    }

    /// Vector-Jacobian product: gradients of `sum(seed ∘ output)`.
    pub fn vjp(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "vjp",
                seed.shape(),
                self.value(output).shape(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[output.0].requires_grad {
            grads[output.0] = Some(seed);
        }
        let loss = output;
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, contrib: Vec<f64>) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        match &mut grads[var.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(contrib) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[var.0].value.shape().to_vec();
                *slot = Some(Tensor::from_parts(shape, contrib));
            }
        }
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.wants(*a) {
                    self.accumulate(grads, *a, gd.to_vec());
                }
                if self.wants(*b) {
                    let n = self.value(*b).len();
                    let mut gb = vec![0.0; n];
                    for (k, &x) in gd.iter().enumerate() {
                        gb[k % n] += sign * x;
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let bv = self.value(*b).data();
                    self.accumulate(grads, *a, gd.iter().zip(bv).map(|(x, y)| x * y).collect());
                }
                if self.wants(*b) {
                    let av = self.value(*a).data();
                    self.accumulate(grads, *b, gd.iter().zip(av).map(|(x, y)| x * y).collect());
                }
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, gd.iter().map(|x| c * x).collect());
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    kernels::matmul_a_bt_acc(&mut ga, gd, tb.data(), m, k, n);
                    self.accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    kernels::matmul_at_b_acc(&mut gb, ta.data(), gd, m, k, n);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Sum(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![gd[0]; n]);
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                self.accumulate(grads, *a, vec![gd[0] / n as f64; n]);
            }
            Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) => {
                let shape = self.value(*a).shape();
                let (outer, dim, inner) = axis_split(shape, *axis);
                let f = if matches!(node.op, Op::MeanAxis(..)) {
                    1.0 / dim as f64
                } else {
                    1.0
                };
                let mut ga = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for d in 0..dim {
                        for j in 0..inner {
                            ga[(o * dim + d) * inner + j] = f * gd[o * inner + j];
                        }
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                let ga = gd
                    .iter()
                    .zip(av)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let cols = *node.value.shape().last().unwrap();
                let mut ga = vec![0.0; y.len()];
                for ((yr, gr), out) in y.chunks(cols).zip(gd.chunks(cols)).zip(ga.chunks_mut(cols))
                {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for ((o, &p), &q) in out.iter_mut().zip(yr).zip(gr) {
                        *o = p * (q - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Log(a) => {
                let av = self.value(*a).data();
                self.accumulate(grads, *a, gd.iter().zip(av).map(|(g, x)| g / x).collect());
            }
            Op::Square(a) => {
                let av = self.value(*a).data();
                self.accumulate(
                    grads,
                    *a,
                    gd.iter().zip(av).map(|(g, x)| 2.0 * x * g).collect(),
                );
            }
            Op::Sqrt(a) => {
                let y = node.value.data();
                let ga = gd
                    .iter()
                    .zip(y)
                    .map(|(g, &r)| if r > 0.0 { g / (2.0 * r) } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Concat(parts, axis) => {
                let out_shape = node.value.shape();
                let (outer, total, inner) = axis_split(out_shape, *axis);
                let mut offset = 0;
                for p in parts {
                    let dim = self.value(*p).shape()[*axis];
                    if self.wants(*p) {
                        let mut gp = Vec::with_capacity(outer * dim * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            gp.extend_from_slice(&gd[base..base + dim * inner]);
                        }
                        self.accumulate(grads, *p, gp);
                    }
                    offset += dim;
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                end,
            } => {
                let shape = self.value(*input).shape();
                let (outer, dim, inner) = axis_split(shape, *axis);
                let width = (end - start) * inner;
                let mut ga = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    let dst = (o * dim + start) * inner;
                    ga[dst..dst + width].copy_from_slice(&gd[o * width..(o + 1) * width]);
                }
                self.accumulate(grads, *input, ga);
            }
            Op::Reshape(a) => {
                self.accumulate(grads, *a, gd.to_vec());
            }
            Op::Conv1d {
                input,
                weight,
                dims,
            } => {
                let (x, w) = (self.value(*input), self.value(*weight));
                let mut gx = self.wants(*input).then(|| vec![0.0; x.len()]);
                let mut gw = self.wants(*weight).then(|| vec![0.0; w.len()]);
                kernels::conv1d_backward(
                    x.data(),
                    w.data(),
                    gd,
                    dims,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                );
                if let Some(gx) = gx {
                    self.accumulate(grads, *input, gx);
                }
                if let Some(gw) = gw {
                    self.accumulate(grads, *weight, gw);
                }
            }
            Op::Rodrigues(a) => {
                let v = self.value(*a).data();
                let ga = kernels::rodrigues_vjp([v[0], v[1], v[2]], gd);
                self.accumulate(grads, *a, ga.to_vec());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::eye(2));
        let x = tape.constant(Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap());
        let y = tape.matmul(i, x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);
        assert_eq!(tape.shape(y), &[2, 1]);
    }

    #[test]
    fn add_zero_and_softmax_symmetry() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let z = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = tape.add(a, z).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 2.0]);
        let sm = tape.softmax(z);
        assert_eq!(tape.value(sm).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
        let c = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(tape.mul(a, c).is_err());
        // general broadcasting is rejected; only trailing-suffix bias adds are allowed
        let d = tape.constant(Tensor::zeros(&[2, 1]));
        assert!(tape.add(a, d).is_err());
        let bias = tape.constant(Tensor::zeros(&[3]));
        assert!(tape.add(a, bias).is_ok());
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let sq = tape.square(x);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[2.0, 4.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let c = tape.constant(Tensor::scalar(5.0));
        let loss = tape.scale(c, 2.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0, 0.0, 0.0]);
        assert!(grads.try_get(x).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn norm_at_origin_has_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[3]));
        let n = tape.norm(x);
        assert_eq!(tape.value(n).item(), 0.0);
        let grads = tape.backward(n).unwrap();
        assert_eq!(grads.get(x).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.leaf(Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap());
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let s = tape.slice(c, 1, 1, 3).unwrap();
        assert_eq!(tape.value(s).data(), &[2.0, 5.0, 4.0, 6.0]);
        let loss = tape.sum(s);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(a).data(), &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(grads.get(b).data(), &[1.0, 1.0]);
    }

    #[test]
    fn backward_twice_is_bitwise_identical() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -1.2, 2.5]));
        let sm = tape.softmax(x);
        let l = tape.log(sm);
        let loss = tape.sum(l);
        let g1 = tape.backward(loss).unwrap().get(x);
        let g2 = tape.backward(loss).unwrap().get(x);
        assert_eq!(g1.data(), g2.data());
    }
}
