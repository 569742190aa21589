//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node that
//! owns its output value. [`Graph::backward`] walks the tape in reverse and
//! fills the gradient of every node that (transitively) depends on a
//! parameter leaf. The heavier layers (convolutions, multi-head attention,
//! LSTM, layer norm) are single fused nodes with hand-written adjoints.

use crate::error::{Error, Result};
use crate::scalar::{gemm, MatRef, Scalar};

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Silu,
}

enum Op<T> {
    Input,
    Param(ParamId),
    Reshape(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Act(Var, Activation),
    SoftmaxLast(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Conv1d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, cols: Vec<T> },
    Depthwise { x: Var, w: Var, b: Var, geom: ConvGeom },
    Attention { q: Var, k: Var, v: Var, geom: AttnGeom, probs: Vec<T> },
    Lstm { x: Var, w_ih: Var, w_hh: Var, b: Var, geom: LstmGeom, cache: LstmCache<T> },
    WeightedSetSum { alpha: Var, items: Var, batch: usize, n: usize, feat: usize },
    CrossEntropy { probs: Var, labels: Vec<T>, weights: Vec<T>, eps: T },
    SumAll(Var),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::Reshape(x) | Op::Scale(x, _) | Op::Act(x, _) | Op::SoftmaxLast(x) | Op::SumAll(x) => vec![*x],
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Conv1d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Depthwise { x, w, b, .. } => vec![*x, *w, *b],
            Op::Attention { q, k, v, .. } => vec![*q, *k, *v],
            Op::Lstm { x, w_ih, w_hh, b, .. } => vec![*x, *w_ih, *w_hh, *b],
            Op::WeightedSetSum { alpha, items, .. } => vec![*alpha, *items],
            Op::CrossEntropy { probs, .. } => vec![*probs],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    batch: usize,
    len: usize,
    cin: usize,
    cout: usize,
    kernel: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        self.kernel / 2
    }
}

#[derive(Clone, Copy, Debug)]
struct AttnGeom {
    batch: usize,
    len: usize,
    width: usize,
    heads: usize,
}

#[derive(Clone, Copy, Debug)]
struct LstmGeom {
    batch: usize,
    len: usize,
    input: usize,
    hidden: usize,
}

struct LstmCache<T> {
    /// Post-activation gates (i, f, g, o) per (batch, step): `B*L x 4H`.
    gates: Vec<T>,
    /// Cell state per (batch, step): `B*L x H`.
    cell: Vec<T>,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
    grad: Option<Vec<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn shape_err(expected: &[usize], found: &[usize]) -> Error {
    Error::ShapeMismatch { expected: expected.to_vec(), found: found.to_vec() }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Param(_) => true,
            other => other.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input)
    }

    /// Leaf holding a copy of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// `x (.., k)` viewed as rows times `w (k, n)`; result keeps the leading dims of `x`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.last_dim() != wv.shape()[0] {
            return Err(shape_err(&[xv.last_dim(), 0], wv.shape()));
        }
        let (rows, k, n) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
        let mut out = vec![T::zero(); rows * n];
        gemm(T::one(), MatRef::new(xv.data(), rows, k), MatRef::new(wv.data(), k, n), T::zero(), &mut out, n);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("matmul input has rank >= 1") = n;
        Ok(self.push(Tensor::from_vec(&shape, out)?, Op::MatMul(x, w)))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let n = xv.last_dim();
        if bv.len() != n {
            return Err(shape_err(&[n], bv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bb) in row.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddBias(x, b)))
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(shape_err(av.shape(), bv.shape()));
        }
        let mut out = av.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += v;
        }
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let mut out = self.value(x).clone();
        let f: fn(T) -> T = match act {
            Activation::Tanh => |v| v.tanh(),
            Activation::Sigmoid => sigmoid,
            Activation::Silu => |v| v * sigmoid(v),
        };
        out.data_mut().iter_mut().for_each(|v| *v = f(*v));
        self.push(out, Op::Act(x, act))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Silu)
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        let n = out.last_dim();
        for row in out.data_mut().chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(out, Op::SoftmaxLast(x))
    }

    /// Normalization over the last axis with learned scale and offset.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.last_dim();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        if g.len() != n || b.len() != n {
            return Err(shape_err(&[n], &[g.len()]));
        }
        let eps = T::from_f64_lossy(1e-5);
        let nf = T::from_usize(n).expect("width");
        let rows = xv.rows();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv.data()[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::from_vec(xv.shape(), out)?;
        Ok(self.push(t, Op::LayerNorm { x, gamma, beta, xhat, rstd }))
    }

    /// Same-padded 1-D convolution. `x: (B, L, Cin)`, `w: (K, Cin, Cout)`, `b: (Cout)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 3 || ws.len() != 3 || ws[1] != xs[2] || ws[0] % 2 == 0 {
            return Err(shape_err(&[0, 0, ws.get(1).copied().unwrap_or(0)], xs));
        }
        let geom = ConvGeom { batch: xs[0], len: xs[1], cin: xs[2], cout: ws[2], kernel: ws[0] };
        let cols = im2col(xv.data(), &geom);
        let kc = geom.kernel * geom.cin;
        let rows = geom.batch * geom.len;
        let mut out = vec![T::zero(); rows * geom.cout];
        gemm(T::one(), MatRef::new(&cols, rows, kc), MatRef::new(wv.data(), kc, geom.cout), T::zero(), &mut out, geom.cout);
        if let Some(b) = b {
            let bv = self.value(b).data();
            if bv.len() != geom.cout {
                return Err(shape_err(&[geom.cout], &[bv.len()]));
            }
            for row in out.chunks_mut(geom.cout) {
                for (o, &bb) in row.iter_mut().zip(bv) {
                    *o += bb;
                }
            }
        }
        let t = Tensor::from_vec(&[geom.batch, geom.len, geom.cout], out)?;
        Ok(self.push(t, Op::Conv1d { x, w, b, geom, cols }))
    }

    /// Same-padded depthwise convolution. `x: (B, L, C)`, `w: (K, C)`, `b: (C)`.
    pub fn depthwise_conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 3 || ws.len() != 2 || ws[1] != xs[2] || bv.len() != xs[2] || ws[0] % 2 == 0 {
            return Err(shape_err(&[0, xs.get(2).copied().unwrap_or(0)], ws));
        }
        let geom = ConvGeom { batch: xs[0], len: xs[1], cin: xs[2], cout: xs[2], kernel: ws[0] };
        let (len, c, pad) = (geom.len, geom.cin, geom.pad() as isize);
        let mut out = vec![T::zero(); xv.len()];
        let (xd, wd) = (xv.data(), wv.data());
        for bi in 0..geom.batch {
            let base = bi * len * c;
            for l in 0..len {
                let o = &mut out[base + l * c..base + (l + 1) * c];
                o.copy_from_slice(bv.data());
                for k in 0..geom.kernel {
                    let src = l as isize + k as isize - pad;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    let xr = &xd[base + src as usize * c..base + (src as usize + 1) * c];
                    let wr = &wd[k * c..(k + 1) * c];
                    for j in 0..c {
                        o[j] += xr[j] * wr[j];
                    }
                }
            }
        }
        let t = Tensor::from_vec(xs, out)?;
        Ok(self.push(t, Op::Depthwise { x, w, b, geom }))
    }

    /// Multi-head scaled dot-product attention core. `q, k, v: (B, L, D)`,
    /// heads split `D` into contiguous slices; scores are scaled by
    /// `1/sqrt(D / heads)`. Output `(B, L, D)` before the output projection.
    pub fn multi_head_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let s = qv.shape();
        if s.len() != 3 || kv.shape() != s || vv.shape() != s || heads == 0 || s[2] % heads != 0 {
            return Err(shape_err(s, kv.shape()));
        }
        let geom = AttnGeom { batch: s[0], len: s[1], width: s[2], heads };
        let (len, width) = (geom.len, geom.width);
        let dh = width / heads;
        let scale = T::one() / T::from_usize(dh).expect("head width").sqrt();
        let mut probs = vec![T::zero(); geom.batch * heads * len * len];
        let mut out = vec![T::zero(); qv.len()];
        for b in 0..geom.batch {
            for h in 0..heads {
                let off = b * len * width + h * dh;
                let view = |d| head_view(d, off, len, dh, width);
                let p = &mut probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
                gemm(scale, view(qv.data()), view(kv.data()).t(), T::zero(), p, len);
                for row in p.chunks_mut(len) {
                    softmax_in_place(row);
                }
                gemm(T::one(), MatRef::new(p, len, len), view(vv.data()), T::zero(), &mut out[off..], width);
            }
        }
        let t = Tensor::from_vec(s, out)?;
        Ok(self.push(t, Op::Attention { q, k, v, geom, probs }))
    }

    /// Row-stochastic attention matrices of an attention node:
    /// `(B, heads, L, L)` flattened.
    pub fn attention_probs(&self, v: Var) -> Option<&[T]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Single-layer LSTM over `x: (B, L, Din)`, zero initial state.
    /// Gate column blocks of `w_ih (Din, 4H)`, `w_hh (H, 4H)`, `b (4H)` are
    /// ordered input, forget, cell, output. Returns hidden states `(B, L, H)`.
    pub fn lstm(&mut self, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
        let (xv, wi, wh, bv) = (self.value(x), self.value(w_ih), self.value(w_hh), self.value(b));
        let xs = xv.shape();
        if xs.len() != 3 || wi.shape().len() != 2 || wi.shape()[0] != xs[2] {
            return Err(shape_err(&[xs.get(2).copied().unwrap_or(0), 0], wi.shape()));
        }
        let hidden = wh.shape()[0];
        if wi.shape()[1] != 4 * hidden || wh.shape() != [hidden, 4 * hidden] || bv.len() != 4 * hidden {
            return Err(shape_err(&[hidden, 4 * hidden], wh.shape()));
        }
        let geom = LstmGeom { batch: xs[0], len: xs[1], input: xs[2], hidden };
        let (bsz, len, h4) = (geom.batch, geom.len, 4 * hidden);
        let rows = bsz * len;
        let mut gates = vec![T::zero(); rows * h4];
        gemm(T::one(), MatRef::new(xv.data(), rows, geom.input), MatRef::new(wi.data(), geom.input, h4), T::zero(), &mut gates, h4);
        for row in gates.chunks_mut(h4) {
            for (g, &bb) in row.iter_mut().zip(bv.data()) {
                *g += bb;
            }
        }
        let mut cell = vec![T::zero(); rows * hidden];
        let mut hs = vec![T::zero(); rows * hidden];
        for t in 0..len {
            if t > 0 {
                let hprev = MatRef { data: &hs[(t - 1) * hidden..], rows: bsz, cols: hidden, row_stride: len * hidden, transposed: false };
                gemm(T::one(), hprev, MatRef::new(wh.data(), hidden, h4), T::one(), &mut gates[t * h4..], len * h4);
            }
            for bi in 0..bsz {
                let r = bi * len + t;
                let g = &mut gates[r * h4..(r + 1) * h4];
                for j in 0..hidden {
                    g[j] = sigmoid(g[j]);
                    g[hidden + j] = sigmoid(g[hidden + j]);
                    g[2 * hidden + j] = g[2 * hidden + j].tanh();
                    g[3 * hidden + j] = sigmoid(g[3 * hidden + j]);
                }
                for j in 0..hidden {
                    let cprev = if t > 0 { cell[(r - 1) * hidden + j] } else { T::zero() };
                    let c = g[hidden + j] * cprev + g[j] * g[2 * hidden + j];
                    cell[r * hidden + j] = c;
                    hs[r * hidden + j] = g[3 * hidden + j] * c.tanh();
                }
            }
        }
        let t = Tensor::from_vec(&[bsz, len, hidden], hs)?;
        Ok(self.push(t, Op::Lstm { x, w_ih, w_hh, b, geom, cache: LstmCache { gates, cell } }))
    }

    /// `out[b] = sum_n alpha[b, n] * items[b, n]` with `alpha: (B, N)` and
    /// `items: (B, N, ...)`; result shape `(B, ...)`.
    pub fn weighted_set_sum(&mut self, alpha: Var, items: Var) -> Result<Var> {
        let (av, iv) = (self.value(alpha), self.value(items));
        let s = iv.shape();
        if av.shape().len() != 2 || s.len() < 2 || s[..2] != av.shape()[..] {
            return Err(shape_err(av.shape(), s));
        }
        let (batch, n) = (s[0], s[1]);
        let feat: usize = s[2..].iter().product();
        let mut out = vec![T::zero(); batch * feat];
        for b in 0..batch {
            let o = &mut out[b * feat..(b + 1) * feat];
            for i in 0..n {
                let a = av.data()[b * n + i];
                let item = &iv.data()[(b * n + i) * feat..(b * n + i + 1) * feat];
                for (ov, &x) in o.iter_mut().zip(item) {
                    *ov += a * x;
                }
            }
        }
        let mut shape = vec![batch];
        shape.extend_from_slice(&s[2..]);
        let t = Tensor::from_vec(&shape, out)?;
        Ok(self.push(t, Op::WeightedSetSum { alpha, items, batch, n, feat }))
    }

    /// Cross-entropy between probability rows `probs (B, L, C)` and targets
    /// `labels` of the same shape. Positions whose label row is all zero are
    /// padding and excluded; each sample is averaged over its labelled
    /// positions and the batch over samples.
    pub fn cross_entropy(&mut self, probs: Var, labels: &Tensor<T>, eps: T) -> Result<Var> {
        let pv = self.value(probs);
        if pv.shape() != labels.shape() || pv.shape().len() != 3 {
            return Err(shape_err(pv.shape(), labels.shape()));
        }
        let (batch, len, c) = (pv.shape()[0], pv.shape()[1], pv.shape()[2]);
        let bf = T::from_usize(batch).expect("batch");
        let mut weights = vec![T::zero(); batch * len];
        let mut loss = T::zero();
        for b in 0..batch {
            let rows = (0..len).filter(|&l| labels.data()[(b * len + l) * c..(b * len + l + 1) * c].iter().any(|v| !v.is_zero()));
            let labelled: Vec<usize> = rows.collect();
            if labelled.is_empty() {
                continue;
            }
            let w = T::one() / (T::from_usize(labelled.len()).expect("count") * bf);
            for l in labelled {
                weights[b * len + l] = w;
                let r = (b * len + l) * c;
                for j in 0..c {
                    let y = labels.data()[r + j];
                    if !y.is_zero() {
                        loss -= w * y * (pv.data()[r + j] + eps).ln();
                    }
                }
            }
        }
        let op = Op::CrossEntropy { probs, labels: labels.data().to_vec(), weights, eps };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// Reverse sweep from a scalar `loss`. Gradients of earlier sweeps are cleared.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::BackwardBeforeForward);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(shape_err(&[], self.nodes[loss.0].value.shape()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &rest[0];
            let Some(dy) = node.grad.as_deref() else { continue };
            if !node.needs_grad {
                continue;
            }
            for (v, g) in input_grads(before, node, dy) {
                let target = &mut before[v.0];
                match &mut target.grad {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Gradients that reached parameter leaves in the last sweep.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[T])> {
        self.nodes.iter().filter_map(|n| match (&n.op, &n.grad) {
            (Op::Param(id), Some(g)) => Some((*id, g.as_slice())),
            _ => None,
        })
    }
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn head_view<T>(d: &[T], off: usize, rows: usize, cols: usize, stride: usize) -> MatRef<'_, T> {
    MatRef { data: &d[off..], rows, cols, row_stride: stride, transposed: false }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let kc = g.kernel * g.cin;
    let pad = g.pad() as isize;
    let mut cols = vec![T::zero(); g.batch * g.len * kc];
    for b in 0..g.batch {
        for l in 0..g.len {
            let row = &mut cols[(b * g.len + l) * kc..(b * g.len + l + 1) * kc];
            for k in 0..g.kernel {
                let src = l as isize + k as isize - pad;
                if src < 0 || src >= g.len as isize {
                    continue;
                }
                let s = (b * g.len + src as usize) * g.cin;
                row[k * g.cin..(k + 1) * g.cin].copy_from_slice(&x[s..s + g.cin]);
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let kc = g.kernel * g.cin;
    let pad = g.pad() as isize;
    let mut x = vec![T::zero(); g.batch * g.len * g.cin];
    for b in 0..g.batch {
        for l in 0..g.len {
            let row = &cols[(b * g.len + l) * kc..(b * g.len + l + 1) * kc];
            for k in 0..g.kernel {
                let src = l as isize + k as isize - pad;
                if src < 0 || src >= g.len as isize {
                    continue;
                }
                let s = (b * g.len + src as usize) * g.cin;
                for (xv, &cv) in x[s..s + g.cin].iter_mut().zip(&row[k * g.cin..(k + 1) * g.cin]) {
                    *xv += cv;
                }
            }
        }
    }
    x
}

fn column_sums<T: Scalar>(m: &[T], n: usize) -> Vec<T> {
    let mut s = vec![T::zero(); n];
    for row in m.chunks(n) {
        for (a, &b) in s.iter_mut().zip(row) {
            *a += b;
        }
    }
    s
}

/// Adjoint of one node: gradient contributions to each input that needs one.
fn input_grads<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, dy: &[T]) -> Vec<(Var, Vec<T>)> {
    let wants = |v: &Var| nodes[v.0].needs_grad;
    let val = |v: &Var| &nodes[v.0].value;
    let mut out = Vec::new();
    match &node.op {
        Op::Input | Op::Param(_) => {}
        Op::Reshape(x) => out.push((*x, dy.to_vec())),
        Op::MatMul(x, w) => {
            let (xv, wv) = (val(x), val(w));
            let (rows, k, n) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
            if wants(x) {
                let mut dx = vec![T::zero(); rows * k];
                gemm(T::one(), MatRef::new(dy, rows, n), MatRef::new(wv.data(), k, n).t(), T::zero(), &mut dx, k);
                out.push((*x, dx));
            }
            if wants(w) {
                let mut dw = vec![T::zero(); k * n];
                gemm(T::one(), MatRef::new(xv.data(), rows, k).t(), MatRef::new(dy, rows, n), T::zero(), &mut dw, n);
                out.push((*w, dw));
            }
        }
        Op::AddBias(x, b) => {
            if wants(x) {
                out.push((*x, dy.to_vec()));
            }
            if wants(b) {
                out.push((*b, column_sums(dy, val(b).len())));
            }
        }
        Op::Add(a, b) => {
            for v in [a, b] {
                if wants(v) {
                    out.push((*v, dy.to_vec()));
                }
            }
        }
        Op::Scale(x, s) => out.push((*x, dy.iter().map(|&d| d * *s).collect())),
        Op::Act(x, act) => {
            let y = node.value.data();
            let g: Vec<T> = match act {
                Activation::Tanh => dy.iter().zip(y).map(|(&d, &y)| d * (T::one() - y * y)).collect(),
                Activation::Sigmoid => dy.iter().zip(y).map(|(&d, &y)| d * y * (T::one() - y)).collect(),
                Activation::Silu => dy
                    .iter()
                    .zip(val(x).data())
                    .map(|(&d, &xv)| {
                        let s = sigmoid(xv);
                        d * s * (T::one() + xv * (T::one() - s))
                    })
                    .collect(),
            };
            out.push((*x, g));
        }
        Op::SoftmaxLast(x) => {
            let n = node.value.last_dim();
            let mut g = vec![T::zero(); dy.len()];
            for ((gr, yr), dr) in g.chunks_mut(n).zip(node.value.data().chunks(n)).zip(dy.chunks(n)) {
                let dot: T = yr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                for j in 0..n {
                    gr[j] = yr[j] * (dr[j] - dot);
                }
            }
            out.push((*x, g));
        }
        Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
            let n = node.value.last_dim();
            let g = val(gamma).data();
            if wants(gamma) {
                let mut dg = vec![T::zero(); n];
                for (hr, dr) in xhat.chunks(n).zip(dy.chunks(n)) {
                    for j in 0..n {
                        dg[j] += hr[j] * dr[j];
                    }
                }
                out.push((*gamma, dg));
            }
            if wants(beta) {
                out.push((*beta, column_sums(dy, n)));
            }
            if wants(x) {
                let nf = T::from_usize(n).expect("width");
                let mut dx = vec![T::zero(); dy.len()];
                for (r, ((dxr, hr), dr)) in dx.chunks_mut(n).zip(xhat.chunks(n)).zip(dy.chunks(n)).enumerate() {
                    let mut mean_d = T::zero();
                    let mut mean_dh = T::zero();
                    for j in 0..n {
                        let dh = dr[j] * g[j];
                        mean_d += dh;
                        mean_dh += dh * hr[j];
                    }
                    mean_d /= nf;
                    mean_dh /= nf;
                    for j in 0..n {
                        dxr[j] = rstd[r] * (dr[j] * g[j] - mean_d - hr[j] * mean_dh);
                    }
                }
                out.push((*x, dx));
            }
        }
        Op::Conv1d { x, w, b, geom, cols } => {
            let kc = geom.kernel * geom.cin;
            let rows = geom.batch * geom.len;
            if wants(w) {
                let mut dw = vec![T::zero(); kc * geom.cout];
                gemm(T::one(), MatRef::new(cols, rows, kc).t(), MatRef::new(dy, rows, geom.cout), T::zero(), &mut dw, geom.cout);
                out.push((*w, dw));
            }
            if let Some(b) = b {
                if wants(b) {
                    out.push((*b, column_sums(dy, geom.cout)));
                }
            }
            if wants(x) {
                let mut dcols = vec![T::zero(); rows * kc];
                gemm(T::one(), MatRef::new(dy, rows, geom.cout), MatRef::new(val(w).data(), kc, geom.cout).t(), T::zero(), &mut dcols, kc);
                out.push((*x, col2im(&dcols, geom)));
            }
        }
        Op::Depthwise { x, w, b, geom } => {
            let (len, c, pad) = (geom.len, geom.cin, geom.pad() as isize);
            let (xd, wd) = (val(x).data(), val(w).data());
            let mut dx = vec![T::zero(); xd.len()];
            let mut dw = vec![T::zero(); wd.len()];
            for bi in 0..geom.batch {
                let base = bi * len * c;
                for l in 0..len {
                    let d = &dy[base + l * c..base + (l + 1) * c];
                    for k in 0..geom.kernel {
                        let src = l as isize + k as isize - pad;
                        if src < 0 || src >= len as isize {
                            continue;
                        }
                        let s = base + src as usize * c;
                        for j in 0..c {
                            dx[s + j] += d[j] * wd[k * c + j];
                            dw[k * c + j] += d[j] * xd[s + j];
                        }
                    }
                }
            }
            if wants(x) {
                out.push((*x, dx));
            }
            if wants(w) {
                out.push((*w, dw));
            }
            if wants(b) {
                out.push((*b, column_sums(dy, c)));
            }
        }
        Op::Attention { q, k, v, geom, probs } => {
            let (len, width, heads) = (geom.len, geom.width, geom.heads);
            let dh = width / heads;
            let scale = T::one() / T::from_usize(dh).expect("head width").sqrt();
            let (qd, kd, vd) = (val(q).data(), val(k).data(), val(v).data());
            let mut dq = vec![T::zero(); qd.len()];
            let mut dk = vec![T::zero(); kd.len()];
            let mut dv = vec![T::zero(); vd.len()];
            let mut dp = vec![T::zero(); len * len];
            for b in 0..geom.batch {
                for h in 0..heads {
                    let off = b * len * width + h * dh;
                    let view = |d| head_view(d, off, len, dh, width);
                    let p = &probs[(b * heads + h) * len * len..(b * heads + h + 1) * len * len];
                    // dV = P^T dO ; dP = dO V^T
                    gemm(T::one(), MatRef::new(p, len, len).t(), view(dy), T::zero(), &mut dv[off..], width);
                    gemm(T::one(), view(dy), view(vd).t(), T::zero(), &mut dp, len);
                    // dS = P * (dP - rowsum(dP * P)), already folded with the score scale
                    for (dr, pr) in dp.chunks_mut(len).zip(p.chunks(len)) {
                        let dot: T = dr.iter().zip(pr).map(|(&a, &b)| a * b).sum();
                        for j in 0..len {
                            dr[j] = pr[j] * (dr[j] - dot) * scale;
                        }
                    }
                    gemm(T::one(), MatRef::new(&dp, len, len), view(kd), T::zero(), &mut dq[off..], width);
                    gemm(T::one(), MatRef::new(&dp, len, len).t(), view(qd), T::zero(), &mut dk[off..], width);
                }
            }
            for (var, g) in [(q, dq), (k, dk), (v, dv)] {
                if wants(var) {
                    out.push((*var, g));
                }
            }
        }
        Op::Lstm { x, w_ih, w_hh, b, geom, cache } => {
            let (bsz, len, hidden) = (geom.batch, geom.len, geom.hidden);
            let h4 = 4 * hidden;
            let hs = node.value.data();
            let wh = val(w_hh).data();
            let mut dgates = vec![T::zero(); bsz * len * h4];
            let mut dh_next = vec![T::zero(); bsz * hidden];
            let mut dc_next = vec![T::zero(); bsz * hidden];
            for t in (0..len).rev() {
                for bi in 0..bsz {
                    let r = bi * len + t;
                    let g = &cache.gates[r * h4..(r + 1) * h4];
                    let dg = &mut dgates[r * h4..(r + 1) * h4];
                    for j in 0..hidden {
                        let (ig, fg, cg, og) = (g[j], g[hidden + j], g[2 * hidden + j], g[3 * hidden + j]);
                        let c = cache.cell[r * hidden + j];
                        let tc = c.tanh();
                        let cprev = if t > 0 { cache.cell[(r - 1) * hidden + j] } else { T::zero() };
                        let dh = dy[r * hidden + j] + dh_next[bi * hidden + j];
                        let dc = dh * og * (T::one() - tc * tc) + dc_next[bi * hidden + j];
                        dg[j] = dc * cg * ig * (T::one() - ig);
                        dg[hidden + j] = dc * cprev * fg * (T::one() - fg);
                        dg[2 * hidden + j] = dc * ig * (T::one() - cg * cg);
                        dg[3 * hidden + j] = dh * tc * og * (T::one() - og);
                        dc_next[bi * hidden + j] = dc * fg;
                    }
                }
                // dh_{t-1} = dG_t W_hh^T
                let dgt = MatRef { data: &dgates[t * h4..], rows: bsz, cols: h4, row_stride: len * h4, transposed: false };
                gemm(T::one(), dgt, MatRef::new(wh, hidden, h4).t(), T::zero(), &mut dh_next, hidden);
            }
            if wants(w_hh) {
                let mut dwh = vec![T::zero(); hidden * h4];
                for t in 1..len {
                    let hprev = MatRef { data: &hs[(t - 1) * hidden..], rows: bsz, cols: hidden, row_stride: len * hidden, transposed: false };
                    let dgt = MatRef { data: &dgates[t * h4..], rows: bsz, cols: h4, row_stride: len * h4, transposed: false };
                    gemm(T::one(), hprev.t(), dgt, T::one(), &mut dwh, h4);
                }
                out.push((*w_hh, dwh));
            }
            let rows = bsz * len;
            if wants(w_ih) {
                let mut dwi = vec![T::zero(); geom.input * h4];
                gemm(T::one(), MatRef::new(val(x).data(), rows, geom.input).t(), MatRef::new(&dgates, rows, h4), T::zero(), &mut dwi, h4);
                out.push((*w_ih, dwi));
            }
            if wants(b) {
                out.push((*b, column_sums(&dgates, h4)));
            }
            if wants(x) {
                let mut dx = vec![T::zero(); rows * geom.input];
                gemm(T::one(), MatRef::new(&dgates, rows, h4), MatRef::new(val(w_ih).data(), geom.input, h4).t(), T::zero(), &mut dx, geom.input);
                out.push((*x, dx));
            }
        }
        Op::WeightedSetSum { alpha, items, batch, n, feat } => {
            let (av, iv) = (val(alpha).data(), val(items).data());
            if wants(alpha) {
                let mut da = vec![T::zero(); batch * n];
                for b in 0..*batch {
                    let d = &dy[b * feat..(b + 1) * feat];
                    for i in 0..*n {
                        let item = &iv[(b * n + i) * feat..(b * n + i + 1) * feat];
                        da[b * n + i] = item.iter().zip(d).map(|(&x, &g)| x * g).sum();
                    }
                }
                out.push((*alpha, da));
            }
            if wants(items) {
                let mut di = vec![T::zero(); iv.len()];
                for b in 0..*batch {
                    let d = &dy[b * feat..(b + 1) * feat];
                    for i in 0..*n {
                        let a = av[b * n + i];
                        for (o, &g) in di[(b * n + i) * feat..(b * n + i + 1) * feat].iter_mut().zip(d) {
                            *o = a * g;
                        }
                    }
                }
                out.push((*items, di));
            }
        }
        Op::CrossEntropy { probs, labels, weights, eps } => {
            let pv = val(probs);
            let c = pv.last_dim();
            let mut g = vec![T::zero(); pv.len()];
            for (r, &w) in weights.iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                for j in 0..c {
                    let y = labels[r * c + j];
                    if !y.is_zero() {
                        g[r * c + j] = -dy[0] * w * y / (pv.data()[r * c + j] + *eps);
                    }
                }
            }
            out.push((*probs, g));
        }
        Op::SumAll(x) => out.push((*x, vec![dy[0]; val(x).len()])),
    }
    out
}
