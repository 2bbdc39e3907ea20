//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass and consumed by
//! [`Graph::backward`]. Parameters enter as leaves through [`Graph::param`];
//! everything else that enters through [`Graph::constant`] is treated as data
//! and never receives a gradient.

use super::gru::{self, GruSeqCache};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MulCol(Var, Var),
    BroadcastRows(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Square(Var),
    Powf(Var, f64),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    GruSeq(Box<GruSeqCache>),
}

pub struct Graph {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    needs_grad: Vec<bool>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.values.len() - 1)
    }

    /// A trainable leaf. Its gradient is reported by [`Gradients::get`].
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf, true)
    }

    /// A non-trainable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub(crate) fn requires_grad(&self, v: Var) -> bool {
        self.needs_grad[v.0]
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.values[x.0];
        let data = src.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(src.shape().to_vec(), data).expect("unary keeps shape");
        let ng = self.needs_grad[x.0];
        self.push(out, op, ng)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
        if self.values[a.0].len() != self.values[b.0].len()
            || self.values[a.0].cols() != self.values[b.0].cols()
        {
            return Err(Error::config(format!("{what}: shapes {sa:?} and {sb:?} differ")));
        }
        Ok(())
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("binary keeps shape");
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        self.push(out, op, ng)
    }

    /// `a [m x k] * b [k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        if tb.rows() != k {
            return Err(Error::config(format!(
                "matmul: {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, 0.0, &mut out);
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), ng))
    }

    /// Adds the row vector `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let c = ta.cols();
        if tb.len() != c {
            return Err(Error::config(format!(
                "add_row: {:?} + {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            row.iter_mut().zip(tb.data()).for_each(|(x, y)| *x += y);
        }
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let ng = self.needs_grad[a.0] || self.needs_grad[b.0];
        Ok(self.push(out, Op::AddRow(a, b), ng))
    }

    /// `x * w + b` for `x [m x in]`, `w [in x out]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.binary(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.binary(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.binary(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "div")?;
        Ok(self.binary(a, b, Op::Div(a, b), |x, y| x / y))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "minimum")?;
        Ok(self.binary(a, b, Op::Minimum(a, b), f64::min))
    }

    /// Scales row `i` of `x [m x n]` by `col[i]` for `col [m x 1]`.
    pub fn mul_col(&mut self, col: Var, x: Var) -> Result<Var> {
        let (tc, tx) = (&self.values[col.0], &self.values[x.0]);
        let (m, n) = (tx.rows(), tx.cols());
        if tc.len() != m {
            return Err(Error::config(format!(
                "mul_col: column {:?} against {:?}",
                tc.shape(),
                tx.shape()
            )));
        }
        let mut data = tx.data().to_vec();
        for (row, &s) in data.chunks_mut(n).zip(tc.data()) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let ng = self.needs_grad[col.0] || self.needs_grad[x.0];
        Ok(self.push(out, Op::MulCol(col, x), ng))
    }

    /// Repeats a single row `rows` times.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let t = &self.values[x.0];
        if t.rows() != 1 || rows == 0 {
            return Err(Error::config(format!(
                "broadcast_rows: {:?} to {rows} rows",
                t.shape()
            )));
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(rows * c);
        for _ in 0..rows {
            data.extend_from_slice(t.data());
        }
        let ng = self.needs_grad[x.0];
        Ok(self.push(Tensor::matrix(rows, c, data)?, Op::BroadcastRows(x), ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::Scale(x, s), |v| v * s)
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + s)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), f64::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    /// `x^p` for non-negative `x`. The derivative at `x = 0` is taken as 0.
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        self.unary(x, Op::Powf(x, p), |v| v.powf(p))
    }

    /// Clamp to `[lo, hi]`; the gradient passes only strictly inside the box.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values[x.0].data().iter().sum();
        let ng = self.needs_grad[x.0];
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.values[x.0];
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let ng = self.needs_grad[x.0];
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    /// Row sums: `[m x n] -> [m x 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let t = &self.values[x.0];
        let (m, n) = (t.rows(), t.cols());
        let data = t.data().chunks(n).map(|r| r.iter().sum()).collect();
        let ng = self.needs_grad[x.0];
        let out = Tensor::matrix(m, 1, data).expect("sum_cols shape");
        self.push(out, Op::SumCols(x), ng)
    }

    /// Runs reverse-mode differentiation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.values.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            if !self.needs_grad[id] {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match self.ops[i] {
                Op::Leaf if self.needs_grad[i] => g,
                _ => None,
            })
            .collect();
        Ok(Gradients {
            grads,
            shapes: self.values.iter().map(|t| t.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &self.values[id];
        match &self.ops[id] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs_grad[a.0] {
                    let buf = slot(grads, *a, m * k);
                    gemm(m, n, k, g, false, tb.data(), true, 1.0, buf);
                }
                if self.needs_grad[b.0] {
                    let buf = slot(grads, *b, k * n);
                    gemm(k, m, n, ta.data(), true, g, false, 1.0, buf);
                }
            }
            Op::AddRow(a, b) => {
                if self.needs_grad[a.0] {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if self.needs_grad[b.0] {
                    let c = out.cols();
                    let buf = slot(grads, *b, c);
                    for row in g.chunks(c) {
                        add_into(buf, row);
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.needs_grad[v.0] {
                        add_into(slot(grads, *v, g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs_grad[a.0] {
                    add_into(slot(grads, *a, g.len()), g);
                }
                if self.needs_grad[b.0] {
                    let buf = slot(grads, *b, g.len());
                    buf.iter_mut().zip(g).for_each(|(d, gi)| *d -= gi);
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.values[a.0].data(), self.values[b.0].data());
                if self.needs_grad[a.0] {
                    let buf = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        buf[i] += g[i] * tb[i];
                    }
                }
                if self.needs_grad[b.0] {
                    let buf = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        buf[i] += g[i] * ta[i];
                    }
                }
            }
            Op::Div(a, b) => {
                let (ta, tb) = (self.values[a.0].data(), self.values[b.0].data());
                if self.needs_grad[a.0] {
                    let buf = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        buf[i] += g[i] / tb[i];
                    }
                }
                if self.needs_grad[b.0] {
                    let buf = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        buf[i] -= g[i] * ta[i] / (tb[i] * tb[i]);
                    }
                }
            }
            Op::Minimum(a, b) => {
                let (ta, tb) = (self.values[a.0].data(), self.values[b.0].data());
                // Ties route the gradient to the first argument.
                if self.needs_grad[a.0] {
                    let buf = slot(grads, *a, g.len());
                    for i in 0..g.len() {
                        if ta[i] <= tb[i] {
                            buf[i] += g[i];
                        }
                    }
                }
                if self.needs_grad[b.0] {
                    let buf = slot(grads, *b, g.len());
                    for i in 0..g.len() {
                        if ta[i] > tb[i] {
                            buf[i] += g[i];
                        }
                    }
                }
            }
            Op::MulCol(col, x) => {
                let (tc, tx) = (&self.values[col.0], &self.values[x.0]);
                let n = tx.cols();
                if self.needs_grad[col.0] {
                    let buf = slot(grads, *col, tc.len());
                    for (i, (grow, xrow)) in g.chunks(n).zip(tx.data().chunks(n)).enumerate() {
                        buf[i] += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                if self.needs_grad[x.0] {
                    let buf = slot(grads, *x, g.len());
                    for ((brow, grow), &s) in buf.chunks_mut(n).zip(g.chunks(n)).zip(tc.data()) {
                        brow.iter_mut().zip(grow).for_each(|(d, gi)| *d += gi * s);
                    }
                }
            }
            Op::BroadcastRows(x) => {
                let c = out.cols();
                let buf = slot(grads, *x, c);
                for row in g.chunks(c) {
                    add_into(buf, row);
                }
            }
            Op::Scale(x, s) => {
                let buf = slot(grads, *x, g.len());
                buf.iter_mut().zip(g).for_each(|(d, gi)| *d += gi * s);
            }
            Op::AddScalar(x) => add_into(slot(grads, *x, g.len()), g),
            Op::Tanh(x) => {
                let y = out.data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    buf[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Sigmoid(x) => {
                let y = out.data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    buf[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Softplus(x) => {
                let xs = self.values[x.0].data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    buf[i] += g[i] * sigmoid(xs[i]);
                }
            }
            Op::Exp(x) => {
                let y = out.data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    buf[i] += g[i] * y[i];
                }
            }
            Op::Square(x) => {
                let xs = self.values[x.0].data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    buf[i] += 2.0 * g[i] * xs[i];
                }
            }
            Op::Powf(x, p) => {
                let xs = self.values[x.0].data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    if xs[i] != 0.0 {
                        buf[i] += g[i] * p * xs[i].powf(p - 1.0);
                    }
                }
            }
            Op::Clamp(x, lo, hi) => {
                let xs = self.values[x.0].data();
                let buf = slot(grads, *x, g.len());
                for i in 0..g.len() {
                    if xs[i] > *lo && xs[i] < *hi {
                        buf[i] += g[i];
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.values[x.0].len();
                slot(grads, *x, n).iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(x) => {
                let n = self.values[x.0].len();
                let s = g[0] / n as f64;
                slot(grads, *x, n).iter_mut().for_each(|d| *d += s);
            }
            Op::SumCols(x) => {
                let n = self.values[x.0].cols();
                let len = self.values[x.0].len();
                let buf = slot(grads, *x, len);
                for (row, gi) in buf.chunks_mut(n).zip(g) {
                    row.iter_mut().for_each(|d| *d += gi);
                }
            }
            Op::GruSeq(cache) => gru::backward(self, cache, g, grads),
        }
    }
}

/// Gradient map produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a parameter leaf. Parameters the
    /// loss does not reach get an all-zero gradient.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn is_reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

pub(crate) fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
