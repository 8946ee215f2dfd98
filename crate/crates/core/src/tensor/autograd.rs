use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;
use std::rc::Rc;

use super::{ParamId, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Sum,
    Mean,
    Max,
}

/// Reduction axis. `Rows` collapses the row dimension (result `1×c`),
/// `Cols` collapses columns (result `r×1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    All,
    Rows,
    Cols,
}

const NONE: usize = usize::MAX;

enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Concat(Vec<usize>),
    SliceCols(usize, usize),
    SliceRows(usize, usize),
    Transpose(usize),
    LeakyRelu(usize, T),
    Mask(usize, Vec<bool>, T),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Sum(usize, Axis),
    Mean(usize, Axis),
    Max(usize, Vec<usize>),
    Gather(usize, Rc<[usize]>),
    PairSum(usize, Rc<[usize]>, usize, Rc<[usize]>),
    Scatter(usize, Rc<[usize]>, Aggregation, Vec<usize>),
    SegmentSoftmax(usize, Rc<[usize]>),
    EdgeWeightedSum {
        values: usize,
        weights: usize,
        src: Rc<[usize]>,
        dst: Rc<[usize]>,
    },
    HeadDot(usize, usize),
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    CrossEntropy {
        logits: usize,
        labels: Rc<[usize]>,
        probs: Vec<T>,
    },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf | Param(_) => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | MulCol(a, b) => {
                vec![*a, *b]
            }
            PairSum(a, _, b, _) | HeadDot(a, b) => vec![*a, *b],
            Concat(v) => v.clone(),
            Scale(a, _) | SliceCols(a, _) | SliceRows(a, _) | Transpose(a) | LeakyRelu(a, _)
            | Tanh(a) | Exp(a) | Log(a) | Sum(a, _) | Mean(a, _) | Max(a, _) | Gather(a, _)
            | Scatter(a, ..) | SegmentSoftmax(a, _) | Mask(a, ..) => vec![*a],
            EdgeWeightedSum {
                values, weights, ..
            } => vec![*values, *weights],
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A computation tape. Values are recorded as operations run; [`Graph::backward`]
/// walks the tape in reverse.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value on a [`Graph`].
pub struct Var<'g, T> {
    graph: &'g Graph<T>,
    id: usize,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

impl<T> std::fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({})", self.id)
    }
}

/// Gradients of a scalar with respect to parameters and to leaves created
/// with [`Graph::variable`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: BTreeMap<ParamId, Tensor<T>>,
    leaves: BTreeMap<usize, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(&id)
    }

    pub fn wrt(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.leaves.get(&var.id)
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty() && self.leaves.is_empty()
    }
}

/// Result of a training-mode batch norm: the output plus batch mean and
/// unbiased variance per column.
pub struct BnOutput<'g, T> {
    pub out: Var<'g, T>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn shape_err(op: &'static str, left: [usize; 2], right: [usize; 2]) -> Error {
    Error::Shape { op, left, right }
}

fn check_ids(ids: &[usize], bound: usize, what: &str) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= bound) {
        return Err(Error::domain(format!("{what} index {bad} out of range (< {bound})")));
    }
    Ok(())
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = match op {
            Op::Leaf => false,
            Op::Param(_) => true,
            _ => op.inputs().iter().any(|&i| nodes[i].requires_grad),
        };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A value that receives no gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Leaf)
    }

    /// A leaf whose gradient is reported by [`Gradients::wrt`].
    pub fn variable(&self, value: Tensor<T>) -> Var<'_, T> {
        let v = self.push(value, Op::Leaf);
        self.nodes.borrow_mut()[v.id].requires_grad = true;
        v
    }

    pub fn param(&self, id: ParamId, value: Tensor<T>) -> Var<'_, T> {
        self.push(value, Op::Param(id))
    }

    /// Reverse pass from a `1×1` loss. Intermediate gradients are dropped as
    /// soon as they have been propagated.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id].value.shape();
        if shape != [1, 1] {
            return Err(Error::domain(format!(
                "backward needs a scalar loss, got shape {shape:?}"
            )));
        }
        let mut out = Gradients {
            params: BTreeMap::new(),
            leaves: BTreeMap::new(),
        };
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.id).map(|_| None).collect();
        if nodes[loss.id].requires_grad {
            grads[loss.id] = Some(Tensor::scalar(T::one()));
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &nodes[id].op {
                Op::Leaf => {
                    out.leaves.insert(id, g);
                }
                Op::Param(p) => match out.params.get_mut(p) {
                    Some(t) => t.add_assign(&g),
                    None => {
                        out.params.insert(*p, g);
                    }
                },
                op => backward_op(&nodes, id, op, g, &mut grads),
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Real>(
    nodes: &[Node<T>],
    grads: &mut [Option<Tensor<T>>],
    id: usize,
    g: Tensor<T>,
) {
    if !nodes[id].requires_grad {
        return;
    }
    match &mut grads[id] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
}

fn backward_op<T: Real>(
    nodes: &[Node<T>],
    id: usize,
    op: &Op<T>,
    g: Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) {
    let need = |i: usize| nodes[i].requires_grad;
    let val = |i: usize| &nodes[i].value;
    let y = &nodes[id].value;
    match op {
        Op::Leaf | Op::Param(_) => unreachable!(),
        Op::MatMul(a, b) => {
            let (va, vb) = (val(*a), val(*b));
            let (m, k, n) = (va.rows, va.cols, vb.cols);
            if need(*a) {
                let mut da = Tensor::zeros(m, k);
                T::gemm(m, n, k, &g.data, false, &vb.data, true, T::zero(), &mut da.data);
                accumulate(nodes, grads, *a, da);
            }
            if need(*b) {
                let mut db = Tensor::zeros(k, n);
                T::gemm(k, m, n, &va.data, true, &g.data, false, T::zero(), &mut db.data);
                accumulate(nodes, grads, *b, db);
            }
        }
        Op::Add(a, b) => {
            if need(*b) {
                accumulate(nodes, grads, *b, g.clone());
            }
            accumulate(nodes, grads, *a, g);
        }
        Op::Sub(a, b) => {
            if need(*b) {
                accumulate(nodes, grads, *b, g.map(|v| -v));
            }
            accumulate(nodes, grads, *a, g);
        }
        Op::Mul(a, b) => {
            if need(*a) {
                accumulate(nodes, grads, *a, zip_map(&g, val(*b), |x, y| x * y));
            }
            if need(*b) {
                accumulate(nodes, grads, *b, zip_map(&g, val(*a), |x, y| x * y));
            }
        }
        Op::Scale(a, s) => accumulate(nodes, grads, *a, g.map(|v| v * *s)),
        Op::AddRow(a, b) => {
            if need(*b) {
                let mut db = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (d, &v) in db.data.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(nodes, grads, *b, db);
            }
            accumulate(nodes, grads, *a, g);
        }
        Op::MulCol(a, c) => {
            let (va, vc) = (val(*a), val(*c));
            if need(*c) {
                let mut dc = Tensor::zeros(va.rows, 1);
                for r in 0..va.rows {
                    dc.data[r] = g.row(r).iter().zip(va.row(r)).map(|(&x, &y)| x * y).sum();
                }
                accumulate(nodes, grads, *c, dc);
            }
            if need(*a) {
                let mut da = g;
                for r in 0..va.rows {
                    let s = vc.data[r];
                    for v in &mut da.data[r * va.cols..(r + 1) * va.cols] {
                        *v *= s;
                    }
                }
                accumulate(nodes, grads, *a, da);
            }
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let w = val(p).cols;
                if need(p) {
                    let mut dp = Tensor::zeros(g.rows, w);
                    for r in 0..g.rows {
                        dp.data[r * w..(r + 1) * w].copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    accumulate(nodes, grads, p, dp);
                }
                offset += w;
            }
        }
        Op::SliceCols(a, start) => {
            let va = val(*a);
            let mut da = Tensor::zeros(va.rows, va.cols);
            for r in 0..g.rows {
                da.data[r * va.cols + start..r * va.cols + start + g.cols].copy_from_slice(g.row(r));
            }
            accumulate(nodes, grads, *a, da);
        }
        Op::SliceRows(a, start) => {
            let va = val(*a);
            let mut da = Tensor::zeros(va.rows, va.cols);
            da.data[start * va.cols..start * va.cols + g.data.len()].copy_from_slice(&g.data);
            accumulate(nodes, grads, *a, da);
        }
        Op::Transpose(a) => accumulate(nodes, grads, *a, g.transpose()),
        Op::LeakyRelu(a, s) => {
            let da = zip_map(&g, val(*a), |g, x| if x > T::zero() { g } else { g * *s });
            accumulate(nodes, grads, *a, da);
        }
        Op::Mask(a, keep, scale) => {
            let mut da = g;
            for (v, &k) in da.data.iter_mut().zip(keep) {
                *v = if k { *v * *scale } else { T::zero() };
            }
            accumulate(nodes, grads, *a, da);
        }
        Op::Tanh(a) => accumulate(nodes, grads, *a, zip_map(&g, y, |g, t| g * (T::one() - t * t))),
        Op::Exp(a) => accumulate(nodes, grads, *a, zip_map(&g, y, |g, e| g * e)),
        Op::Log(a) => accumulate(nodes, grads, *a, zip_map(&g, val(*a), |g, x| g / x)),
        Op::Sum(a, axis) | Op::Mean(a, axis) => {
            let va = val(*a);
            let scale = if matches!(op, Op::Mean(..)) {
                let count = match axis {
                    Axis::All => va.len(),
                    Axis::Rows => va.rows,
                    Axis::Cols => va.cols,
                };
                T::one() / T::lit(count as f64)
            } else {
                T::one()
            };
            let mut da = Tensor::zeros(va.rows, va.cols);
            for r in 0..va.rows {
                for c in 0..va.cols {
                    let gv = match axis {
                        Axis::All => g.data[0],
                        Axis::Rows => g.data[c],
                        Axis::Cols => g.data[r],
                    };
                    da.data[r * va.cols + c] = gv * scale;
                }
            }
            accumulate(nodes, grads, *a, da);
        }
        Op::Max(a, winners) => {
            let va = val(*a);
            let mut da = Tensor::zeros(va.rows, va.cols);
            for (k, &w) in winners.iter().enumerate() {
                da.data[w] += g.data[k];
            }
            accumulate(nodes, grads, *a, da);
        }
        Op::Gather(a, idx) => {
            let va = val(*a);
            let d = va.cols;
            let mut da = Tensor::zeros(va.rows, d);
            for (e, &i) in idx.iter().enumerate() {
                add_row(&mut da.data[i * d..(i + 1) * d], g.row(e));
            }
            accumulate(nodes, grads, *a, da);
        }
        Op::PairSum(a, ia, b, ib) => {
            for (x, idx) in [(*a, ia), (*b, ib)] {
                if !need(x) {
                    continue;
                }
                let vx = val(x);
                let d = vx.cols;
                let mut dx = Tensor::zeros(vx.rows, d);
                for (e, &i) in idx.iter().enumerate() {
                    add_row(&mut dx.data[i * d..(i + 1) * d], g.row(e));
                }
                accumulate(nodes, grads, x, dx);
            }
        }
        Op::Scatter(x, dst, mode, aux) => {
            let vx = val(*x);
            let d = vx.cols;
            let mut dx = Tensor::zeros(vx.rows, d);
            match mode {
                Aggregation::Sum => {
                    for (e, &v) in dst.iter().enumerate() {
                        dx.data[e * d..(e + 1) * d].copy_from_slice(g.row(v));
                    }
                }
                Aggregation::Mean => {
                    for (e, &v) in dst.iter().enumerate() {
                        let inv = T::one() / T::lit(aux[v] as f64);
                        for (o, &gv) in dx.data[e * d..(e + 1) * d].iter_mut().zip(g.row(v)) {
                            *o = gv * inv;
                        }
                    }
                }
                Aggregation::Max => {
                    for (k, &e) in aux.iter().enumerate() {
                        if e != NONE {
                            dx.data[e * d + k % d] += g.data[k];
                        }
                    }
                }
            }
            accumulate(nodes, grads, *x, dx);
        }
        Op::SegmentSoftmax(x, dst) => {
            let h = y.cols;
            let n = dst.iter().max().map_or(0, |m| m + 1);
            let mut s = vec![T::zero(); n * h];
            for (e, &v) in dst.iter().enumerate() {
                for c in 0..h {
                    s[v * h + c] += y.data[e * h + c] * g.data[e * h + c];
                }
            }
            let mut dx = Tensor::zeros(y.rows, h);
            for (e, &v) in dst.iter().enumerate() {
                for c in 0..h {
                    let k = e * h + c;
                    dx.data[k] = y.data[k] * (g.data[k] - s[v * h + c]);
                }
            }
            accumulate(nodes, grads, *x, dx);
        }
        Op::EdgeWeightedSum {
            values,
            weights,
            src,
            dst,
        } => {
            let (vv, vw) = (val(*values), val(*weights));
            let heads = vw.cols;
            let width = vv.cols;
            let d = width / heads;
            if need(*weights) {
                let mut dw = Tensor::zeros(vw.rows, heads);
                for e in 0..src.len() {
                    let gr = g.row(dst[e]);
                    let vr = vv.row(src[e]);
                    for h in 0..heads {
                        let r = h * d..(h + 1) * d;
                        dw.data[e * heads + h] =
                            gr[r.clone()].iter().zip(&vr[r]).map(|(&a, &b)| a * b).sum();
                    }
                }
                accumulate(nodes, grads, *weights, dw);
            }
            if need(*values) {
                let mut dv = Tensor::zeros(vv.rows, width);
                for e in 0..src.len() {
                    let gr = g.row(dst[e]);
                    let out = &mut dv.data[src[e] * width..(src[e] + 1) * width];
                    for h in 0..heads {
                        let w = vw.data[e * heads + h];
                        for c in h * d..(h + 1) * d {
                            out[c] += w * gr[c];
                        }
                    }
                }
                accumulate(nodes, grads, *values, dv);
            }
        }
        Op::HeadDot(x, a) => {
            let (vx, va) = (val(*x), val(*a));
            let heads = g.cols;
            let d = vx.cols / heads;
            if need(*a) {
                let mut da = Tensor::zeros(1, vx.cols);
                for r in 0..vx.rows {
                    let xr = vx.row(r);
                    for h in 0..heads {
                        let gv = g.data[r * heads + h];
                        for c in h * d..(h + 1) * d {
                            da.data[c] += gv * xr[c];
                        }
                    }
                }
                accumulate(nodes, grads, *a, da);
            }
            if need(*x) {
                let mut dx = Tensor::zeros(vx.rows, vx.cols);
                for r in 0..vx.rows {
                    for h in 0..heads {
                        let gv = g.data[r * heads + h];
                        for c in h * d..(h + 1) * d {
                            dx.data[r * vx.cols + c] = gv * va.data[c];
                        }
                    }
                }
                accumulate(nodes, grads, *x, dx);
            }
        }
        Op::BatchNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_stats,
        } => {
            let vg = val(*gamma);
            let (n, d) = (g.rows, g.cols);
            let mut sum_g = vec![T::zero(); d];
            let mut sum_gx = vec![T::zero(); d];
            for (gr, hr) in g.data.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                for c in 0..d {
                    sum_g[c] += gr[c];
                    sum_gx[c] += gr[c] * hr[c];
                }
            }
            if need(*x) {
                let mut dx = Tensor::zeros(n, d);
                let inv_n = T::one() / T::lit(n as f64);
                let scale: Vec<T> = (0..d).map(|c| vg.data[c] * inv_std[c]).collect();
                let mean_g: Vec<T> = sum_g.iter().map(|&v| v * inv_n).collect();
                let mean_gx: Vec<T> = sum_gx.iter().map(|&v| v * inv_n).collect();
                for ((dr, gr), hr) in dx
                    .data
                    .chunks_exact_mut(d)
                    .zip(g.data.chunks_exact(d))
                    .zip(xhat.chunks_exact(d))
                {
                    for c in 0..d {
                        dr[c] = if *batch_stats {
                            scale[c] * (gr[c] - mean_g[c] - hr[c] * mean_gx[c])
                        } else {
                            scale[c] * gr[c]
                        };
                    }
                }
                accumulate(nodes, grads, *x, dx);
            }
            if need(*gamma) {
                accumulate(nodes, grads, *gamma, Tensor { rows: 1, cols: d, data: sum_gx });
            }
            if need(*beta) {
                accumulate(nodes, grads, *beta, Tensor { rows: 1, cols: d, data: sum_g });
            }
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
        } => {
            let c = val(*logits).cols;
            let n = labels.len();
            let s = g.data[0] / T::lit(n as f64);
            let mut dl = Tensor {
                rows: n,
                cols: c,
                data: probs.iter().map(|&p| p * s).collect(),
            };
            for (r, &l) in labels.iter().enumerate() {
                dl.data[r * c + l] -= s;
            }
            accumulate(nodes, grads, *logits, dl);
        }
    }
}

#[inline]
fn add_row<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'g, T: Real> Var<'g, T> {
    pub fn graph(&self) -> &'g Graph<T> {
        self.graph
    }

    pub fn value(&self) -> Ref<'g, Tensor<T>> {
        Ref::map(self.graph.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn shape(&self) -> [usize; 2] {
        self.value().shape()
    }

    pub fn rows(&self) -> usize {
        self.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.shape()[1]
    }

    /// Scalar value of a `1×1` variable.
    pub fn item(&self) -> T {
        self.value().data[0]
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var<'g, T> {
        self.graph.push(value, op)
    }

    fn same_shape(&self, other: &Var<'g, T>, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(shape_err(op, a, b));
        }
        Ok(())
    }

    fn elementwise(&self, other: Var<'g, T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.same_shape(&other, op)?;
        Ok(zip_map(&self.value(), &other.value(), f))
    }

    pub fn matmul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.elementwise(other, "add", |a, b| a + b)?;
        Ok(self.push(out, Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.elementwise(other, "sub", |a, b| a - b)?;
        Ok(self.push(out, Op::Sub(self.id, other.id)))
    }

    pub fn mul(self, other: Var<'g, T>) -> Result<Var<'g, T>> {
        let out = self.elementwise(other, "mul", |a, b| a * b)?;
        Ok(self.push(out, Op::Mul(self.id, other.id)))
    }

    pub fn scale(self, s: f64) -> Var<'g, T> {
        let s = T::lit(s);
        let out = self.value().map(|v| v * s);
        self.push(out, Op::Scale(self.id, s))
    }

    /// Adds a `1×c` row vector to every row.
    pub fn add_row(self, bias: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.shape(), bias.shape());
        if b != [1, a[1]] {
            return Err(shape_err("add_row", a, b));
        }
        let mut out = self.value().clone();
        {
            let bv = bias.value();
            for r in 0..a[0] {
                add_row(&mut out.data[r * a[1]..(r + 1) * a[1]], &bv.data);
            }
        }
        Ok(self.push(out, Op::AddRow(self.id, bias.id)))
    }

    /// Multiplies row `i` by the `i`-th entry of an `r×1` column.
    pub fn mul_col(self, col: Var<'g, T>) -> Result<Var<'g, T>> {
        let (a, b) = (self.shape(), col.shape());
        if b != [a[0], 1] {
            return Err(shape_err("mul_col", a, b));
        }
        let mut out = self.value().clone();
        {
            let cv = col.value();
            for r in 0..a[0] {
                for v in &mut out.data[r * a[1]..(r + 1) * a[1]] {
                    *v *= cv.data[r];
                }
            }
        }
        Ok(self.push(out, Op::MulCol(self.id, col.id)))
    }

    /// Column-wise concatenation.
    pub fn concat(parts: &[Var<'g, T>]) -> Result<Var<'g, T>> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::domain("concat of zero tensors"))?;
        let rows = first.rows();
        for p in parts {
            if p.rows() != rows {
                return Err(shape_err("concat", first.shape(), p.shape()));
            }
        }
        let cols: usize = parts.iter().map(|p| p.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row(r));
                }
            }
        }
        let out = Tensor { rows, cols, data };
        Ok(first.push(out, Op::Concat(parts.iter().map(|p| p.id).collect())))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let [r, c] = self.shape();
        if start + len > c {
            return Err(shape_err("slice_cols", [r, c], [start, start + len]));
        }
        let mut data = Vec::with_capacity(r * len);
        {
            let v = self.value();
            for i in 0..r {
                data.extend_from_slice(&v.row(i)[start..start + len]);
            }
        }
        Ok(self.push(Tensor { rows: r, cols: len, data }, Op::SliceCols(self.id, start)))
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Result<Var<'g, T>> {
        let [r, c] = self.shape();
        if start + len > r {
            return Err(shape_err("slice_rows", [r, c], [start, start + len]));
        }
        let data = self.value().data[start * c..(start + len) * c].to_vec();
        Ok(self.push(Tensor { rows: len, cols: c, data }, Op::SliceRows(self.id, start)))
    }

    pub fn transpose(self) -> Var<'g, T> {
        let out = self.value().transpose();
        self.push(out, Op::Transpose(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g, T> {
        let s = T::lit(slope);
        let out = self.value().map(|v| if v > T::zero() { v } else { v * s });
        self.push(out, Op::LeakyRelu(self.id, s))
    }

    /// `keep[k] ? self[k]·scale : 0`, elementwise in row-major order.
    pub fn masked_scale(self, keep: Vec<bool>, scale: f64) -> Result<Var<'g, T>> {
        if keep.len() != self.value().len() {
            return Err(shape_err("masked_scale", self.shape(), [keep.len(), 1]));
        }
        let s = T::lit(scale);
        let mut out = self.value().clone();
        for (v, &k) in out.data.iter_mut().zip(&keep) {
            *v = if k { *v * s } else { T::zero() };
        }
        Ok(self.push(out, Op::Mask(self.id, keep, s)))
    }

    pub fn relu(self) -> Var<'g, T> {
        self.leaky_relu(0.0)
    }

    pub fn tanh(self) -> Var<'g, T> {
        let out = self.value().map(|v| v.tanh());
        self.push(out, Op::Tanh(self.id))
    }

    pub fn exp(self) -> Var<'g, T> {
        let out = self.value().map(|v| v.exp());
        self.push(out, Op::Exp(self.id))
    }

    pub fn ln(self) -> Result<Var<'g, T>> {
        if self.value().data.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::domain("log of a non-positive value"));
        }
        let out = self.value().map(|v| v.ln());
        Ok(self.push(out, Op::Log(self.id)))
    }

    fn reduce(&self, axis: Axis) -> Tensor<T> {
        let v = self.value();
        match axis {
            Axis::All => Tensor::scalar(v.data.iter().copied().sum()),
            Axis::Rows => {
                let mut out = Tensor::zeros(1, v.cols);
                for r in 0..v.rows {
                    add_row(&mut out.data, v.row(r));
                }
                out
            }
            Axis::Cols => Tensor {
                rows: v.rows,
                cols: 1,
                data: (0..v.rows).map(|r| v.row(r).iter().copied().sum()).collect(),
            },
        }
    }

    pub fn sum(self, axis: Axis) -> Var<'g, T> {
        let out = self.reduce(axis);
        self.push(out, Op::Sum(self.id, axis))
    }

    pub fn mean(self, axis: Axis) -> Var<'g, T> {
        let [r, c] = self.shape();
        let count = match axis {
            Axis::All => r * c,
            Axis::Rows => r,
            Axis::Cols => c,
        };
        let inv = T::one() / T::lit(count as f64);
        let out = self.reduce(axis).map(|v| v * inv);
        self.push(out, Op::Mean(self.id, axis))
    }

    /// Maximum along an axis; the gradient goes to the first maximal entry.
    pub fn max(self, axis: Axis) -> Result<Var<'g, T>> {
        let (out, winners) = {
            let v = self.value();
            if v.is_empty() {
                return Err(Error::domain("max of an empty tensor"));
            }
            let groups: Vec<Vec<usize>> = match axis {
                Axis::All => vec![(0..v.len()).collect()],
                Axis::Rows => (0..v.cols).map(|c| (0..v.rows).map(|r| r * v.cols + c).collect()).collect(),
                Axis::Cols => (0..v.rows).map(|r| (r * v.cols..(r + 1) * v.cols).collect()).collect(),
            };
            let winners: Vec<usize> = groups
                .iter()
                .map(|grp| {
                    let mut best = grp[0];
                    for &k in &grp[1..] {
                        if v.data[k] > v.data[best] {
                            best = k;
                        }
                    }
                    best
                })
                .collect();
            let (rows, cols) = match axis {
                Axis::All => (1, 1),
                Axis::Rows => (1, v.cols),
                Axis::Cols => (v.rows, 1),
            };
            let data = winners.iter().map(|&k| v.data[k]).collect();
            (Tensor { rows, cols, data }, winners)
        };
        Ok(self.push(out, Op::Max(self.id, winners)))
    }

    /// Rows `idx[0], idx[1], …` of `self`.
    pub fn gather(self, idx: &Rc<[usize]>) -> Result<Var<'g, T>> {
        check_ids(idx, self.rows(), "gather")?;
        let out = self.value().select_rows(idx);
        Ok(self.push(out, Op::Gather(self.id, idx.clone())))
    }

    /// Row `e` of the result is `self[ia[e]] + other[ib[e]]`.
    pub fn pair_sum(self, ia: &Rc<[usize]>, other: Var<'g, T>, ib: &Rc<[usize]>) -> Result<Var<'g, T>> {
        if self.cols() != other.cols() || ia.len() != ib.len() {
            return Err(shape_err("pair_sum", self.shape(), other.shape()));
        }
        check_ids(ia, self.rows(), "pair_sum")?;
        check_ids(ib, other.rows(), "pair_sum")?;
        let d = self.cols();
        let mut data = Vec::with_capacity(ia.len() * d);
        {
            let (va, vb) = (self.value(), other.value());
            for (&i, &j) in ia.iter().zip(ib.iter()) {
                data.extend(va.row(i).iter().zip(vb.row(j)).map(|(&x, &y)| x + y));
            }
        }
        let out = Tensor { rows: ia.len(), cols: d, data };
        Ok(self.push(out, Op::PairSum(self.id, ia.clone(), other.id, ib.clone())))
    }

    /// Aggregates message rows onto `num_vertices` destination rows. Vertices
    /// without messages get zeros in every mode.
    pub fn scatter(self, dst: &Rc<[usize]>, num_vertices: usize, mode: Aggregation) -> Result<Var<'g, T>> {
        let [e, d] = self.shape();
        if dst.len() != e {
            return Err(shape_err("scatter", [e, d], [dst.len(), 1]));
        }
        check_ids(dst, num_vertices, "scatter destination")?;
        let (out, aux) = {
            let v = self.value();
            let mut out = Tensor::zeros(num_vertices, d);
            let aux = match mode {
                Aggregation::Sum | Aggregation::Mean => {
                    let mut count = vec![0usize; num_vertices];
                    for (k, &t) in dst.iter().enumerate() {
                        add_row(&mut out.data[t * d..(t + 1) * d], v.row(k));
                        count[t] += 1;
                    }
                    if mode == Aggregation::Mean {
                        for (t, &n) in count.iter().enumerate() {
                            if n > 1 {
                                let inv = T::one() / T::lit(n as f64);
                                for x in &mut out.data[t * d..(t + 1) * d] {
                                    *x *= inv;
                                }
                            }
                        }
                        count
                    } else {
                        Vec::new()
                    }
                }
                Aggregation::Max => {
                    let mut win = vec![NONE; num_vertices * d];
                    for (k, &t) in dst.iter().enumerate() {
                        let row = v.row(k);
                        for c in 0..d {
                            let slot = &mut win[t * d + c];
                            if *slot == NONE || row[c] > v.data[*slot * d + c] {
                                *slot = k;
                            }
                        }
                    }
                    for (s, &k) in win.iter().enumerate() {
                        if k != NONE {
                            out.data[s] = v.data[k * d + s % d];
                        }
                    }
                    win
                }
            };
            (out, aux)
        };
        Ok(self.push(out, Op::Scatter(self.id, dst.clone(), mode, aux)))
    }

    /// Softmax of each column within groups of rows sharing a destination.
    pub fn segment_softmax(self, dst: &Rc<[usize]>) -> Result<Var<'g, T>> {
        let [e, h] = self.shape();
        if dst.len() != e {
            return Err(shape_err("segment_softmax", [e, h], [dst.len(), 1]));
        }
        let n = dst.iter().max().map_or(0, |m| m + 1);
        let out = {
            let v = self.value();
            let mut mx = vec![T::neg_infinity(); n * h];
            for (k, &t) in dst.iter().enumerate() {
                for c in 0..h {
                    let m = &mut mx[t * h + c];
                    *m = m.max(v.data[k * h + c]);
                }
            }
            let mut out = Tensor::zeros(e, h);
            let mut den = vec![T::zero(); n * h];
            for (k, &t) in dst.iter().enumerate() {
                for c in 0..h {
                    let z = (v.data[k * h + c] - mx[t * h + c]).exp();
                    out.data[k * h + c] = z;
                    den[t * h + c] += z;
                }
            }
            for (k, &t) in dst.iter().enumerate() {
                for c in 0..h {
                    out.data[k * h + c] /= den[t * h + c];
                }
            }
            out
        };
        Ok(self.push(out, Op::SegmentSoftmax(self.id, dst.clone())))
    }

    /// Weighted neighbourhood sum over `heads` column blocks:
    /// `out[dst[e], block h] += weights[e, h] · self[src[e], block h]`.
    pub fn edge_weighted_sum(
        self,
        weights: Var<'g, T>,
        src: &Rc<[usize]>,
        dst: &Rc<[usize]>,
        num_vertices: usize,
    ) -> Result<Var<'g, T>> {
        let [n, width] = self.shape();
        let [e, heads] = weights.shape();
        if heads == 0 || width % heads != 0 || src.len() != e || dst.len() != e {
            return Err(shape_err("edge_weighted_sum", [n, width], [e, heads]));
        }
        check_ids(src, n, "edge source")?;
        check_ids(dst, num_vertices, "edge destination")?;
        let d = width / heads;
        let out = {
            let (v, w) = (self.value(), weights.value());
            let mut out = Tensor::zeros(num_vertices, width);
            for k in 0..e {
                let vr = v.row(src[k]);
                let o = &mut out.data[dst[k] * width..(dst[k] + 1) * width];
                for h in 0..heads {
                    let wt = w.data[k * heads + h];
                    for c in h * d..(h + 1) * d {
                        o[c] += wt * vr[c];
                    }
                }
            }
            out
        };
        Ok(self.push(
            out,
            Op::EdgeWeightedSum {
                values: self.id,
                weights: weights.id,
                src: src.clone(),
                dst: dst.clone(),
            },
        ))
    }

    /// Per-head dot product with a `1×(heads·d)` vector, giving `n×heads`.
    pub fn head_dot(self, a: Var<'g, T>, heads: usize) -> Result<Var<'g, T>> {
        let [n, width] = self.shape();
        if heads == 0 || width % heads != 0 || a.shape() != [1, width] {
            return Err(shape_err("head_dot", [n, width], a.shape()));
        }
        let d = width / heads;
        let out = {
            let (x, av) = (self.value(), a.value());
            let mut out = Tensor::zeros(n, heads);
            for r in 0..n {
                let xr = x.row(r);
                for h in 0..heads {
                    out.data[r * heads + h] = (h * d..(h + 1) * d).map(|c| xr[c] * av.data[c]).sum();
                }
            }
            out
        };
        Ok(self.push(out, Op::HeadDot(self.id, a.id)))
    }

    fn check_bn(&self, gamma: &Var<'g, T>, beta: &Var<'g, T>) -> Result<()> {
        let d = self.cols();
        for p in [gamma, beta] {
            if p.shape() != [1, d] {
                return Err(shape_err("batch_norm", self.shape(), p.shape()));
            }
        }
        Ok(())
    }

    /// Batch normalization with statistics of the current batch.
    pub fn batch_norm_train(self, gamma: Var<'g, T>, beta: Var<'g, T>, eps: f64) -> Result<BnOutput<'g, T>> {
        self.check_bn(&gamma, &beta)?;
        let [n, d] = self.shape();
        if n == 0 {
            return Err(Error::domain("batch norm over zero rows"));
        }
        let (out, xhat, inv_std, mean, var) = {
            let x = self.value();
            let mut mean = vec![0.0f64; d];
            for row in x.data.chunks_exact(d) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v.f64();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut ss = vec![0.0f64; d];
            for row in x.data.chunks_exact(d) {
                for ((s, &v), &m) in ss.iter_mut().zip(row).zip(&mean) {
                    let dv = v.f64() - m;
                    *s += dv * dv;
                }
            }
            let inv_std: Vec<T> = ss.iter().map(|s| T::lit(1.0 / (s / n as f64 + eps).sqrt())).collect();
            let mean_t: Vec<T> = mean.iter().map(|&m| T::lit(m)).collect();
            let (gv, bv) = (gamma.value(), beta.value());
            let mut xhat = vec![T::zero(); n * d];
            let mut out = Tensor::zeros(n, d);
            for ((xr, hr), or) in x
                .data
                .chunks_exact(d)
                .zip(xhat.chunks_exact_mut(d))
                .zip(out.data.chunks_exact_mut(d))
            {
                for c in 0..d {
                    let h = (xr[c] - mean_t[c]) * inv_std[c];
                    hr[c] = h;
                    or[c] = h * gv.data[c] + bv.data[c];
                }
            }
            let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
            let var = ss.iter().map(|s| s / denom).collect();
            (out, xhat, inv_std, mean, var)
        };
        let v = self.push(
            out,
            Op::BatchNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
                batch_stats: true,
            },
        );
        Ok(BnOutput { out: v, mean, var })
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        self,
        gamma: Var<'g, T>,
        beta: Var<'g, T>,
        mean: &[T],
        var: &[T],
        eps: f64,
    ) -> Result<Var<'g, T>> {
        self.check_bn(&gamma, &beta)?;
        let [n, d] = self.shape();
        if mean.len() != d || var.len() != d {
            return Err(shape_err("batch_norm", [n, d], [1, mean.len()]));
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::lit(eps)).sqrt()).collect();
        let (out, xhat) = {
            let (x, gv, bv) = (self.value(), gamma.value(), beta.value());
            let mut xhat = vec![T::zero(); n * d];
            let mut out = Tensor::zeros(n, d);
            for r in 0..n {
                for c in 0..d {
                    let k = r * d + c;
                    xhat[k] = (x.data[k] - mean[c]) * inv_std[c];
                    out.data[k] = xhat[k] * gv.data[c] + bv.data[c];
                }
            }
            (out, xhat)
        };
        Ok(self.push(
            out,
            Op::BatchNorm {
                x: self.id,
                gamma: gamma.id,
                beta: beta.id,
                xhat,
                inv_std,
                batch_stats: false,
            },
        ))
    }

    /// Mean over rows of `−log softmax(row)[label]`, max-shifted for stability.
    pub fn cross_entropy(self, labels: &Rc<[usize]>) -> Result<Var<'g, T>> {
        let [n, c] = self.shape();
        if labels.len() != n || n == 0 {
            return Err(shape_err("cross_entropy", [n, c], [labels.len(), 1]));
        }
        check_ids(labels, c, "class label")?;
        let (loss, probs) = {
            let x = self.value();
            let mut probs = vec![T::zero(); n * c];
            let mut total = T::zero();
            for r in 0..n {
                let row = x.row(r);
                let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut den = T::zero();
                for (k, &v) in row.iter().enumerate() {
                    let z = (v - m).exp();
                    probs[r * c + k] = z;
                    den += z;
                }
                for p in &mut probs[r * c..(r + 1) * c] {
                    *p /= den;
                }
                total += den.ln() + m - row[labels[r]];
            }
            (total / T::lit(n as f64), probs)
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: self.id,
                labels: labels.clone(),
                probs,
            },
        ))
    }
}
