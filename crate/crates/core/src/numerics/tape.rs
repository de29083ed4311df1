//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation in evaluation order; node indices are
//! therefore already a topological order and [`Tape::backward`] simply walks
//! them in reverse. Parameters enter the tape through [`Tape::param`] and are
//! keyed by their [`ParamId`] in the returned [`Gradients`].

use std::collections::BTreeMap;
use std::rc::Rc;

use super::activation::Activation;
use super::tensor::{gemm, Tensor};
use super::ParamId;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    BlockLeftMul(Rc<Vec<Tensor>>, Var),
    BlockMeanRows(Var, usize),
    RepeatRows(Var, usize),
    Reshape(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients of a scalar loss with respect to every parameter registered on
/// the tape. A parameter that was registered more than once receives the sum.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Elementwise sum, used to reduce gradients from independent tapes.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        for (id, g) in other.iter() {
            match self.grads.get_mut(&id) {
                Some(mine) => *mine = mine.add(g)?,
                None => {
                    self.grads.insert(id, g.clone());
                }
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .flat_map(|g| g.data())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::ConcatCols(parts) | Op::ConcatRows(parts) => parts.iter().any(|p| self.needs(*p)),
            Op::Scale(a, _)
            | Op::Act(a, _)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::BlockLeftMul(_, a)
            | Op::BlockMeanRows(a, _)
            | Op::RepeatRows(a, _)
            | Op::Reshape(a) => self.needs(*a),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that takes part in the computation but receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a trainable parameter; its gradient is reported by `backward`.
    pub fn param(&mut self, id: ParamId, value: &Tensor) -> Var {
        let v = self.push(value.clone(), Op::Leaf);
        self.nodes[v.0].needs_grad = true;
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Adds a `[1, n]` (or `[n]`) row to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let x = self.value(a);
        let r = self.value(row);
        let (m, n) = x.dims2("add_row")?;
        if r.len() != n {
            return Err(Error::Shape {
                op: "add_row",
                left: x.shape().to_vec(),
                right: r.shape().to_vec(),
            });
        }
        let mut out = x.data().to_vec();
        for i in 0..m {
            for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        let out = Tensor::from_parts(vec![m, n], out);
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn act(&mut self, a: Var, kind: Activation) -> Var {
        let out = super::activation::activate(self.value(a), kind);
        self.push(out, Op::Act(a, kind))
    }

    /// Columns `lo..hi` of a matrix.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = x.dims2("slice_cols")?;
        if lo >= hi || hi > n {
            return Err(Error::contract(format!("column range {lo}..{hi} outside {n}")));
        }
        let w = hi - lo;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&x.data()[i * n + lo..i * n + hi]);
        }
        let out = Tensor::from_parts(vec![m, w], out);
        Ok(self.push(out, Op::SliceCols(a, lo)))
    }

    /// Rows `lo..hi` of a matrix.
    pub fn slice_rows(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var> {
        let x = self.value(a);
        let (m, n) = x.dims2("slice_rows")?;
        if lo >= hi || hi > m {
            return Err(Error::contract(format!("row range {lo}..{hi} outside {m}")));
        }
        let out = Tensor::from_parts(vec![hi - lo, n], x.data()[lo * n..hi * n].to_vec());
        Ok(self.push(out, Op::SliceRows(a, lo)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of nothing"))?;
        let m = self.value(*first).dims2("concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pm, pn) = self.value(*p).dims2("concat_cols")?;
            if pm != m {
                return Err(Error::Shape {
                    op: "concat_cols",
                    left: self.value(*first).shape().to_vec(),
                    right: self.value(*p).shape().to_vec(),
                });
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::from_parts(vec![m, total], out);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of nothing"))?;
        let n = self.value(*first).dims2("concat_rows")?.1;
        let mut rows = 0;
        for p in parts {
            let (pm, pn) = self.value(*p).dims2("concat_rows")?;
            if pn != n {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: self.value(*first).shape().to_vec(),
                    right: self.value(*p).shape().to_vec(),
                });
            }
            rows += pm;
        }
        let mut out = Vec::with_capacity(rows * n);
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
        }
        let out = Tensor::from_parts(vec![rows, n], out);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        self.push(out, Op::Mean(a))
    }

    /// Treats `x` as a stack of `blocks.len()` (or, with a single shared
    /// matrix, `rows / n`) row blocks and left-multiplies block `b` by
    /// `blocks[b]`. Used to propagate over a batch of graphs.
    pub fn block_left_mul(&mut self, blocks: Rc<Vec<Tensor>>, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, d) = xv.dims2("block_left_mul")?;
        let first = blocks.first().ok_or_else(|| Error::contract("no blocks"))?;
        let n = first.dims2("block_left_mul")?.0;
        let count = rows / n;
        if rows % n != 0 || (blocks.len() != 1 && blocks.len() != count) {
            return Err(Error::Shape {
                op: "block_left_mul",
                left: first.shape().to_vec(),
                right: xv.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; rows * d];
        for b in 0..count {
            let mat = &blocks[if blocks.len() == 1 { 0 } else { b }];
            if mat.shape() != [n, n] {
                return Err(Error::Shape {
                    op: "block_left_mul",
                    left: mat.shape().to_vec(),
                    right: vec![n, n],
                });
            }
            gemm(
                n,
                n,
                d,
                mat.data(),
                false,
                &xv.data()[b * n * d..(b + 1) * n * d],
                false,
                &mut out[b * n * d..(b + 1) * n * d],
                0.0,
            );
        }
        let out = Tensor::from_parts(vec![rows, d], out);
        Ok(self.push(out, Op::BlockLeftMul(blocks, x)))
    }

    /// Mean over each consecutive group of `n` rows: `[b·n, d] → [b, d]`.
    pub fn block_mean_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, d) = xv.dims2("block_mean_rows")?;
        if n == 0 || rows % n != 0 {
            return Err(Error::contract(format!("{rows} rows not divisible into blocks of {n}")));
        }
        let count = rows / n;
        let mut out = vec![0.0; count * d];
        for b in 0..count {
            for r in 0..n {
                let src = &xv.data()[(b * n + r) * d..(b * n + r + 1) * d];
                for (o, s) in out[b * d..(b + 1) * d].iter_mut().zip(src) {
                    *o += s;
                }
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let out = Tensor::from_parts(vec![count, d], out);
        Ok(self.push(out, Op::BlockMeanRows(x, n)))
    }

    /// Repeats every row `n` times in place: `[b, d] → [b·n, d]`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let xv = self.value(x);
        let (count, d) = xv.dims2("repeat_rows")?;
        let mut out = Vec::with_capacity(count * n * d);
        for b in 0..count {
            for _ in 0..n {
                out.extend_from_slice(xv.row_slice(b));
            }
        }
        let out = Tensor::from_parts(vec![count * n, d], out);
        Ok(self.push(out, Op::RepeatRows(x, n)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Back-propagates from a scalar `loss` and returns the gradient of every
    /// registered parameter (zeros for parameters the loss does not use).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        let mut param_grads: Vec<Option<Vec<f64>>> = Vec::new();
        param_grads.resize_with(loss.0 + 1, || None);
        if self.needs(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            // Buffer for input `v`, or `None` when `v` takes no gradient.
            macro_rules! grad_of {
                ($v:expr, $len:expr) => {
                    if self.needs($v) {
                        Some(slot(&mut grads, $v, $len))
                    } else {
                        None
                    }
                };
            }
            match &node.op {
                Op::Leaf => {
                    param_grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = bv.shape()[1];
                    if let Some(da) = grad_of!(*a, m * k) {
                        gemm(m, n, k, &g, false, bv.data(), true, da, 1.0);
                    }
                    if let Some(db) = grad_of!(*b, k * n) {
                        gemm(k, m, n, av.data(), true, &g, false, db, 1.0);
                    }
                }
                Op::Add(a, b) => {
                    if let Some(da) = grad_of!(*a, g.len()) {
                        axpy(da, &g, 1.0);
                    }
                    if let Some(db) = grad_of!(*b, g.len()) {
                        axpy(db, &g, 1.0);
                    }
                }
                Op::Sub(a, b) => {
                    if let Some(da) = grad_of!(*a, g.len()) {
                        axpy(da, &g, 1.0);
                    }
                    if let Some(db) = grad_of!(*b, g.len()) {
                        axpy(db, &g, -1.0);
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    if let Some(da) = grad_of!(*a, g.len()) {
                        for i in 0..g.len() {
                            da[i] += g[i] * bv[i];
                        }
                    }
                    if let Some(db) = grad_of!(*b, g.len()) {
                        for i in 0..g.len() {
                            db[i] += g[i] * av[i];
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if let Some(da) = grad_of!(*a, g.len()) {
                        axpy(da, &g, 1.0);
                    }
                    let n = self.value(*row).len();
                    if let Some(dr) = grad_of!(*row, n) {
                        for chunk in g.chunks(n) {
                            axpy(dr, chunk, 1.0);
                        }
                    }
                }
                Op::Scale(a, k) => {
                    if let Some(da) = grad_of!(*a, g.len()) {
                        axpy(da, &g, *k);
                    }
                }
                Op::Act(a, kind) => {
                    let x = self.value(*a).data();
                    let y = node.value.data();
                    if let Some(da) = grad_of!(*a, g.len()) {
                        for i in 0..g.len() {
                            da[i] += g[i] * kind.derivative(x[i], y[i]);
                        }
                    }
                }
                Op::SliceCols(a, lo) => {
                    let n = self.value(*a).cols();
                    let w = node.value.shape()[1];
                    let total = self.value(*a).len();
                    if let Some(da) = grad_of!(*a, total) {
                        for (i, chunk) in g.chunks(w).enumerate() {
                            axpy(&mut da[i * n + lo..i * n + lo + w], chunk, 1.0);
                        }
                    }
                }
                Op::SliceRows(a, lo) => {
                    let n = node.value.shape()[1];
                    let total = self.value(*a).len();
                    if let Some(da) = grad_of!(*a, total) {
                        axpy(&mut da[lo * n..lo * n + g.len()], &g, 1.0);
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let (m, w) = (self.value(*p).rows(), self.value(*p).cols());
                        if let Some(dp) = grad_of!(*p, m * w) {
                            for i in 0..m {
                                axpy(
                                    &mut dp[i * w..(i + 1) * w],
                                    &g[i * total + offset..i * total + offset + w],
                                    1.0,
                                );
                            }
                        }
                        offset += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        if let Some(dp) = grad_of!(*p, len) {
                            axpy(dp, &g[offset..offset + len], 1.0);
                        }
                        offset += len;
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    if let Some(da) = grad_of!(*a, len) {
                        da.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    let s = g[0] / len as f64;
                    if let Some(da) = grad_of!(*a, len) {
                        da.iter_mut().for_each(|d| *d += s);
                    }
                }
                Op::BlockLeftMul(blocks, x) => {
                    let (rows, d) = (node.value.rows(), node.value.cols());
                    let n = blocks[0].shape()[0];
                    if let Some(dx) = grad_of!(*x, rows * d) {
                        for b in 0..rows / n {
                            let mat = &blocks[if blocks.len() == 1 { 0 } else { b }];
                            gemm(
                                n,
                                n,
                                d,
                                mat.data(),
                                true,
                                &g[b * n * d..(b + 1) * n * d],
                                false,
                                &mut dx[b * n * d..(b + 1) * n * d],
                                1.0,
                            );
                        }
                    }
                }
                Op::BlockMeanRows(x, n) => {
                    let d = node.value.shape()[1];
                    let total = self.value(*x).len();
                    let inv = 1.0 / *n as f64;
                    if let Some(dx) = grad_of!(*x, total) {
                        for (b, gb) in g.chunks(d).enumerate() {
                            for r in 0..*n {
                                axpy(&mut dx[(b * n + r) * d..(b * n + r + 1) * d], gb, inv);
                            }
                        }
                    }
                }
                Op::RepeatRows(x, n) => {
                    let d = node.value.shape()[1];
                    let total = self.value(*x).len();
                    if let Some(dx) = grad_of!(*x, total) {
                        for (r, gr) in g.chunks(d).enumerate() {
                            let b = r / n;
                            axpy(&mut dx[b * d..(b + 1) * d], gr, 1.0);
                        }
                    }
                }
                Op::Reshape(x) => {
                    if let Some(dx) = grad_of!(*x, g.len()) {
                        axpy(dx, &g, 1.0);
                    }
                }
            }
        }

        let mut out = Gradients::default();
        for (id, v) in &self.params {
            let shape = self.value(*v).shape().to_vec();
            let g = match param_grads.get_mut(v.0).and_then(Option::take) {
                Some(g) => Tensor::from_parts(shape, g),
                None => Tensor::zeros(&shape),
            };
            match out.grads.get_mut(id) {
                Some(existing) => *existing = existing.add(&g)?,
                None => {
                    out.grads.insert(*id, g);
                }
            }
        }
        Ok(out)
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], src: &[f64], k: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += k * s;
    }
}
