//! Tape-style reverse-mode autodiff.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::kernels::{self, gemm_nt, gemm_tn};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Boolean `[rows, cols]` matrix; `true` marks a query/key pair that may not
/// attend.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    blocked: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, blocked: Vec<bool>) -> Result<Self> {
        if blocked.len() != rows * cols {
            return Err(Error::LengthMismatch {
                op: "AttentionMask::new",
                detail: format!("{} entries for a {rows}x{cols} mask", blocked.len()),
            });
        }
        Ok(Self { rows, cols, blocked })
    }

    /// Position `i` may attend to positions `0..=i` only.
    pub fn causal(n: usize) -> Self {
        let blocked = (0..n).flat_map(|i| (0..n).map(move |j| j > i)).collect();
        Self { rows: n, cols: n, blocked }
    }

    /// Blocks every key flagged as padding, for all `rows` queries.
    pub fn key_padding(rows: usize, pad: &[bool]) -> Self {
        let blocked = (0..rows).flat_map(|_| pad.iter().copied()).collect();
        Self { rows, cols: pad.len(), blocked }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_blocked(&self, row: usize, col: usize) -> bool {
        self.blocked[row * self.cols + col]
    }

    /// Elementwise union of two masks of the same shape.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "AttentionMask::union",
                lhs: vec![self.rows, self.cols],
                rhs: vec![other.rows, other.cols],
            });
        }
        let blocked = self.blocked.iter().zip(&other.blocked).map(|(a, b)| *a || *b).collect();
        Ok(Self { blocked, ..*self })
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Relu(Var),
    Softmax { x: Var, axis: usize },
    MaskedSoftmax { x: Var, mask: AttentionMask },
    LayerNorm { x: Var, gain: Var, bias: Var, normalized: Vec<f64>, inv_std: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    Nll { logits: Var, targets: Vec<usize>, mask: Vec<bool>, probs: Vec<f64>, count: usize },
    Dropout { x: Var, scale: Vec<f64> },
    Transpose(Var),
    SliceCols { x: Var, start: usize, end: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Row { x: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

/// A differentiable computation recorded operation by operation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: HashMap<String, Var>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every node value in creation order.
    pub fn values(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().map(|n| &n.value)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, param: None });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Records a leaf; it is differentiable iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        let rg = tensor.requires_grad();
        let mut value = tensor;
        value.zero_grad();
        self.push(value, Op::Leaf, rg)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.set_requires_grad(false);
        tensor.zero_grad();
        self.push(tensor, Op::Leaf, false)
    }

    /// Registers a named parameter once per graph; later calls return the
    /// same node so gradients from every use land in one buffer.
    pub fn param(&mut self, name: &str, tensor: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.leaf(tensor.clone());
        self.nodes[v.0].param = Some(name.to_owned());
        self.params.insert(name.to_owned(), v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a node, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Gradients of every registered parameter that received one.
    pub fn param_grads(&self) -> BTreeMap<String, Vec<f64>> {
        self.params.iter().filter_map(|(name, v)| self.grads[v.0].clone().map(|g| (name.clone(), g))).collect()
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// `x[.., d] + v[d]`, broadcasting `v` over every leading index.
    pub fn add_broadcast(&mut self, x: Var, v: Var) -> Result<Var> {
        let (xt, vt) = (self.value(x), self.value(v));
        let d = *xt.shape().last().unwrap_or(&0);
        if vt.shape() != [d] {
            return Err(shape_err("add_broadcast", xt.shape(), vt.shape()));
        }
        let data = xt.data().chunks(d.max(1)).flat_map(|row| row.iter().zip(vt.data()).map(|(p, q)| p + q)).collect();
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        let rg = self.rg(&[x, v]);
        Ok(self.push(out, Op::AddBroadcast(x, v), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("mul", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let xt = self.value(x);
        let data = xt.data().iter().map(|v| v * c).collect();
        let out = Tensor::new(xt.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale(x, c), rg)
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = kernels::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = kernels::softmax(self.value(x), axis)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Softmax { x, axis }, rg))
    }

    /// Row softmax of a 2-D tensor with blocked entries treated as `-inf`.
    /// Fully blocked rows produce zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &AttentionMask) -> Result<Var> {
        let xt = self.value(x);
        if xt.ndim() != 2 || (xt.shape()[0], xt.shape()[1]) != mask.shape() {
            return Err(shape_err("masked_softmax", xt.shape(), &[mask.rows, mask.cols]));
        }
        let (rows, cols) = mask.shape();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &xt.data()[r * cols..(r + 1) * cols];
            let open = |c: &usize| !mask.is_blocked(r, *c);
            let max = (0..cols).filter(open).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for c in (0..cols).filter(open) {
                let e = (row[c] - max).exp();
                out[r * cols + c] = e;
                total += e;
            }
            for c in (0..cols).filter(open) {
                out[r * cols + c] /= total;
            }
        }
        let out = Tensor::new(vec![rows, cols], out)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::MaskedSoftmax { x, mask: mask.clone() }, rg))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (out, cache) = kernels::layer_norm_raw(self.value(x), self.value(gain), self.value(bias), eps)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, normalized: cache.normalized, inv_std: cache.inv_std }, rg))
    }

    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = kernels::embedding_lookup(self.value(table), ids)?;
        let rg = self.rg(&[table]);
        Ok(self.push(out, Op::Embedding { table, ids: ids.to_vec() }, rg))
    }

    pub fn nll_loss(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let lt = self.value(logits);
        let (n, vocab) = kernels::check_nll_inputs(lt.shape(), targets, mask)?;
        let (loss, probs, count) = kernels::nll_raw(lt.data(), n, vocab, targets, mask);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll { logits, targets: targets.to_vec(), mask: mask.to_vec(), probs, count },
            rg,
        ))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - p)`. Identity
    /// when `training` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability must be in [0, 1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let scale: Vec<f64> =
            (0..self.value(x).numel()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let xt = self.value(x);
        let data = xt.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let out = Tensor::new(xt.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Dropout { x, scale }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        if xt.ndim() != 2 {
            return Err(Error::InvalidArgument(format!("transpose expects 2-D, got {:?}", xt.shape())));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = xt.data()[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xt = self.value(x);
        if xt.ndim() != 2 || start > end || end > xt.shape()[1] {
            return Err(Error::InvalidArgument(format!("slice_cols {start}..{end} on shape {:?}", xt.shape())));
        }
        let (r, c) = (xt.shape()[0], xt.shape()[1]);
        let data = (0..r).flat_map(|i| xt.data()[i * c + start..i * c + end].iter().copied()).collect();
        let out = Tensor::new(vec![r, end - start], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::SliceCols { x, start, end }, rg))
    }

    /// Concatenates 2-D tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("concat_cols of nothing".into()))?;
        let rows = self.shape(*first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(shape_err("concat_cols", self.shape(*first), s));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Stacks `[d]` vectors and/or `[r, d]` matrices into one `[n, d]` matrix.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("concat_rows of nothing".into()))?;
        let width = *self.shape(*first).last().unwrap_or(&0);
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            let ok = match t.shape() {
                [d] => *d == width,
                [_, d] => *d == width,
                _ => false,
            };
            if !ok {
                return Err(shape_err("concat_rows", self.shape(*first), t.shape()));
            }
            rows += t.numel() / width.max(1);
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![rows, width], data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row `index` of a 2-D tensor as a `[d]` vector.
    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let xt = self.value(x);
        if xt.ndim() != 2 {
            return Err(Error::InvalidArgument(format!("row expects 2-D, got {:?}", xt.shape())));
        }
        if index >= xt.shape()[0] {
            return Err(Error::IndexOutOfRange { op: "row", index, extent: xt.shape()[0] });
        }
        let out = Tensor::from_vec(xt.row(index).to_vec());
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::Row { x, index }, rg))
    }

    /// Reverse sweep from a scalar `loss`. Gradients accumulate across
    /// repeated calls until [`Graph::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss).to_vec();
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = local[idx].take() else { continue };
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of node {idx}")));
            }
            self.propagate(idx, &g, &mut local);
            match &mut self.grads[idx] {
                Some(acc) => add_into(acc, &g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], local: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = local[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let d = kernels::matmul_dims(at.shape(), bt.shape()).expect("validated in forward");
                let (m, k, n) = (d.m, d.k, d.n);
                send(*a, &|ga| {
                    for t in 0..d.batch {
                        let bo = if d.b_batched { t * k * n } else { 0 };
                        let ao = if d.a_batched { t * m * k } else { 0 };
                        gemm_nt(
                            &g[t * m * n..(t + 1) * m * n],
                            &bt.data()[bo..bo + k * n],
                            &mut ga[ao..ao + m * k],
                            m,
                            n,
                            k,
                        );
                    }
                });
                send(*b, &|gb| {
                    for t in 0..d.batch {
                        let ao = if d.a_batched { t * m * k } else { 0 };
                        let bo = if d.b_batched { t * k * n } else { 0 };
                        gemm_tn(
                            &at.data()[ao..ao + m * k],
                            &g[t * m * n..(t + 1) * m * n],
                            &mut gb[bo..bo + k * n],
                            k,
                            m,
                            n,
                        );
                    }
                });
            }
            Op::Add(a, b) => {
                send(*a, &|ga| add_into(ga, g));
                send(*b, &|gb| add_into(gb, g));
            }
            Op::AddBroadcast(x, v) => {
                send(*x, &|gx| add_into(gx, g));
                send(*v, &|gv| {
                    let d = gv.len();
                    for row in g.chunks(d.max(1)) {
                        add_into(gv, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.value(*a).data(), self.value(*b).data());
                send(*a, &|ga| ga.iter_mut().zip(g).zip(bt).for_each(|((o, gi), bi)| *o += gi * bi));
                send(*b, &|gb| gb.iter_mut().zip(g).zip(at).for_each(|((o, gi), ai)| *o += gi * ai));
            }
            Op::Scale(x, c) => send(*x, &|gx| gx.iter_mut().zip(g).for_each(|(o, gi)| *o += gi * c)),
            Op::Sum(x) => send(*x, &|gx| gx.iter_mut().for_each(|o| *o += g[0])),
            Op::Relu(x) => {
                let xt = self.value(*x).data();
                send(*x, &|gx| {
                    for ((o, gi), xi) in gx.iter_mut().zip(g).zip(xt) {
                        if *xi > 0.0 {
                            *o += gi;
                        }
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) =
                    kernels::axis_layout("softmax", node.value.shape(), *axis).expect("validated in forward");
                send(*x, &|gx| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let idx = |j: usize| (o * len + j) * inner + i;
                            let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                            for j in 0..len {
                                gx[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
                            }
                        }
                    }
                });
            }
            Op::MaskedSoftmax { x, mask } => {
                let y = node.value.data();
                let cols = mask.cols;
                send(*x, &|gx| {
                    for r in 0..mask.rows {
                        let span = r * cols..(r + 1) * cols;
                        let dot: f64 = g[span.clone()].iter().zip(&y[span.clone()]).map(|(a, b)| a * b).sum();
                        for c in span {
                            gx[c] += y[c] * (g[c] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                let gain_v = self.value(*gain).data();
                let d = gain_v.len();
                send(*x, &|gx| {
                    for (r, rstd) in inv_std.iter().enumerate() {
                        let span = r * d..(r + 1) * d;
                        let gh: Vec<f64> = g[span.clone()].iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let xh = &normalized[span.clone()];
                        let mean_gh = gh.iter().sum::<f64>() / d as f64;
                        let mean_ghx = gh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            gx[r * d + j] += rstd * (gh[j] - mean_gh - xh[j] * mean_ghx);
                        }
                    }
                });
                send(*gain, &|gg| {
                    for (row_g, row_x) in g.chunks(d).zip(normalized.chunks(d)) {
                        gg.iter_mut().zip(row_g.iter().zip(row_x)).for_each(|(o, (a, b))| *o += a * b);
                    }
                });
                send(*bias, &|gb| {
                    for row_g in g.chunks(d) {
                        add_into(gb, row_g);
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = self.shape(*table)[1];
                send(*table, &|gt| {
                    for (i, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * d..(id + 1) * d], &g[i * d..(i + 1) * d]);
                    }
                });
            }
            Op::Nll { logits, targets, mask, probs, count } => {
                if *count == 0 {
                    return;
                }
                let vocab = self.shape(*logits)[1];
                let w = g[0] / *count as f64;
                send(*logits, &|gl| {
                    for i in (0..targets.len()).filter(|&i| mask[i]) {
                        for j in 0..vocab {
                            gl[i * vocab + j] += w * probs[i * vocab + j];
                        }
                        gl[i * vocab + targets[i]] -= w;
                    }
                });
            }
            Op::Dropout { x, scale } => {
                send(*x, &|gx| gx.iter_mut().zip(g).zip(scale).for_each(|((o, gi), s)| *o += gi * s));
            }
            Op::Transpose(x) => {
                let (r, c) = (node.value.shape()[1], node.value.shape()[0]);
                send(*x, &|gx| {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::SliceCols { x, start, end } => {
                let c = self.shape(*x)[1];
                let w = end - start;
                send(*x, &|gx| {
                    for (i, row) in g.chunks(w.max(1)).enumerate().take(node.value.shape()[0]) {
                        add_into(&mut gx[i * c + start..i * c + end], row);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    send(p, &|gp| {
                        for (i, row) in gp.chunks_mut(w.max(1)).enumerate() {
                            add_into(row, &g[i * total + offset..i * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    send(p, &|gp| add_into(gp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::Row { x, index } => {
                let d = g.len();
                send(*x, &|gx| add_into(&mut gx[index * d..(index + 1) * d], g));
            }
        }
    }
}
