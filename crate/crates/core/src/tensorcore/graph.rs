//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! Every op appends a node to the [`Graph`]; creation order is a valid
//! topological order, so [`Graph::backward`] walks the nodes once in reverse.

use std::collections::HashMap;
use std::sync::Arc;

use super::rng::CounterRng;
use super::tensor::{DType, Mask, Tensor};
use super::ParamGroup;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Recip(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax {
        x: Var,
        bias: Option<(Var, bool)>,
    },
    LayerNorm {
        x: Var,
        rstd: Vec<f64>,
    },
    Sum(Var),
    Mean(Var),
    MeanAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    Reshape(Var),
    Transpose(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Dropout {
        x: Var,
        keep_scale: Vec<f64>,
    },
    RowNorm(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        bias: Option<Var>,
        keys: Arc<Vec<Vec<usize>>>,
        scale: f64,
        alpha: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Computation graph recording forward values and the ops that made them.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    rng: CounterRng,
    dropout_calls: u64,
    kink_hash: u64,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new(0)
    }
}

fn mix(h: u64, bit: u64) -> u64 {
    (h ^ bit.wrapping_add(0x9e37_79b9_7f4a_7c15))
        .wrapping_mul(0xbf58_476d_1ce4_e5b9)
        .rotate_left(17)
}

impl Graph {
    /// New graph; `seed` drives dropout masks.
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            rng: CounterRng::new(seed),
            dropout_calls: 0,
            kink_hash: 0,
        }
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

    /// Hash of the activation pattern of every non-smooth op seen so far
    /// (ReLU sign, zero row norms). Two evaluations with equal hashes lie in
    /// the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        self.kink_hash
    }

    fn push(&mut self, mut value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        if parents.iter().any(|p| self.nodes[p.0].value.dtype() == DType::F32) {
            value = value.with_dtype(DType::F32);
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a leaf; gradients are tracked when the tensor requires them.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    /// Binds a named parameter as a trainable leaf. Repeated calls return
    /// the same node.
    pub fn param(&mut self, params: &ParamGroup, name: &str) -> Result<Var> {
        let idx = params
            .index_of(name)
            .ok_or_else(|| Error::Usage(format!("unknown parameter `{name}`")))?;
        if let Some(&v) = self.params.get(&idx) {
            return Ok(v);
        }
        let v = self.leaf(params.tensor(idx).clone().with_requires_grad(true));
        self.params.insert(idx, v);
        Ok(v)
    }

    /// Gradient for every parameter in `params` order; unused parameters get
    /// zeros.
    pub fn param_grads(&self, params: &ParamGroup, grads: &Gradients) -> Vec<Vec<f64>> {
        (0..params.len())
            .map(|i| {
                self.params
                    .get(&i)
                    .and_then(|v| grads.get(*v))
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; params.tensor(i).len()])
            })
            .collect()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        self.push(out, op, &[x])
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape(), data).expect("shape checked");
        self.push(out, op, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k) = (va.rows(), va.cols());
        let (k2, n) = (vb.rows(), vb.cols());
        if k != k2 || vb.shape().len() > 2 {
            return Err(Error::shape("matmul", va.shape(), vb.shape()));
        }
        let out = matmul_raw(va.data(), vb.data(), m, k, n);
        let out = Tensor::new(&[m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.binary(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.binary(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.binary(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    fn row_broadcast(&mut self, x: Var, r: Var, add: bool) -> Result<Var> {
        let (vx, vr) = (self.value(x), self.value(r));
        let n = vx.cols();
        if vr.len() != n {
            return Err(Error::shape("row broadcast", vx.shape(), vr.shape()));
        }
        let rd = vr.data();
        let data = vx
            .data()
            .chunks(n)
            .flat_map(|row| {
                row.iter()
                    .zip(rd)
                    .map(move |(&a, &b)| if add { a + b } else { a * b })
            })
            .collect();
        let out = Tensor::new(vx.shape(), data)?;
        let op = if add { Op::AddRow(x, r) } else { Op::MulRow(x, r) };
        Ok(self.push(out, op, &[x, r]))
    }

    /// `x + b` with `b` (length = last extent) broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        self.row_broadcast(x, b, true)
    }

    /// `x ⊙ g` with `g` (length = last extent) broadcast over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        self.row_broadcast(x, g, false)
    }

    /// Scales row `i` of `x` by `s[i]`.
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (vx, vs) = (self.value(x), self.value(s));
        let n = vx.cols();
        if vs.len() != vx.rows() {
            return Err(Error::shape("mul_col", vx.shape(), vs.shape()));
        }
        let sd = vs.data();
        let data = vx
            .data()
            .chunks(n)
            .zip(sd)
            .flat_map(|(row, &c)| row.iter().map(move |&a| a * c))
            .collect();
        let out = Tensor::new(vx.shape(), data)?;
        Ok(self.push(out, Op::MulCol(x, s), &[x, s]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| 1.0 / v, Op::Recip(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut h = self.kink_hash;
        for &v in self.value(x).data() {
            h = mix(h, (v > 0.0) as u64);
        }
        self.kink_hash = h;
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Softmax over the last axis of `x + bias`, restricted to entries kept by
    /// `mask`. Masked entries come out exactly zero. `bias` may match `x` or
    /// be a single row broadcast over all rows.
    pub fn softmax_lastdim(
        &mut self,
        x: Var,
        bias: Option<Var>,
        mask: Option<Arc<Mask>>,
    ) -> Result<Var> {
        let vx = self.value(x);
        let (rows, n) = (vx.rows(), vx.cols());
        let bias_info = match bias {
            None => None,
            Some(b) => {
                let vb = self.value(b);
                if vb.shape() == vx.shape() {
                    Some((b, false))
                } else if vb.len() == n {
                    Some((b, true))
                } else {
                    return Err(Error::shape("softmax bias", vx.shape(), vb.shape()));
                }
            }
        };
        if let Some(m) = &mask {
            if m.rows() != rows || m.cols() != n {
                return Err(Error::shape("softmax mask", vx.shape(), &[m.rows(), m.cols()]));
            }
        }
        let bias_data = bias_info.map(|(b, _)| self.value(b).data());
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let xr = &vx.data()[r * n..(r + 1) * n];
            let keep = mask.as_ref().map(|m| m.row(r));
            let logit = |c: usize| {
                let b = match (bias_data, bias_info) {
                    (Some(bd), Some((_, true))) => bd[c],
                    (Some(bd), Some((_, false))) => bd[r * n + c],
                    _ => 0.0,
                };
                xr[c] + b
            };
            let kept = |c: usize| keep.is_none_or(|k| k[c]);
            let mut max = f64::NEG_INFINITY;
            for c in (0..n).filter(|&c| kept(c)) {
                max = max.max(logit(c));
            }
            if !(0..n).any(kept) {
                return Err(Error::Domain(format!("softmax row {r} is fully masked")));
            }
            let orow = &mut out[r * n..(r + 1) * n];
            let mut total = 0.0;
            for c in (0..n).filter(|&c| kept(c)) {
                let e = (logit(c) - max).exp();
                orow[c] = e;
                total += e;
            }
            for v in orow.iter_mut() {
                *v /= total;
            }
        }
        let out = Tensor::new(vx.shape(), out)?;
        let mut parents = vec![x];
        if let Some((b, _)) = bias_info {
            parents.push(b);
        }
        Ok(self.push(out, Op::Softmax { x, bias: bias_info }, &parents))
    }

    /// Single-head attention where query row `i` only sees the key rows in
    /// `keys[i]`: `softmax_j(scale·q_i·k_j + b_j)` over those rows, applied
    /// to `v`. `bias` is an optional `1 × N_k` row.
    pub fn sparse_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        bias: Option<Var>,
        keys: Arc<Vec<Vec<usize>>>,
        scale: f64,
    ) -> Result<Var> {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let (nq, dk) = (vq.rows(), vq.cols());
        let (nk, dv) = (vk.rows(), vv.cols());
        if vk.cols() != dk || vv.rows() != nk || keys.len() != nq {
            return Err(Error::shape("sparse_attention", vq.shape(), vk.shape()));
        }
        if let Some(b) = bias {
            if self.value(b).len() != nk {
                return Err(Error::shape("sparse_attention bias", &[1, nk], self.value(b).shape()));
            }
        }
        let bd = bias.map(|b| self.value(b).data());
        let mut out = vec![0.0; nq * dv];
        let mut alpha = Vec::with_capacity(nq);
        for (i, row) in keys.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Domain(format!("attention row {i} has no keys")));
            }
            if row.iter().any(|&j| j >= nk) {
                return Err(Error::Domain(format!("attention row {i} has a key outside 0..{nk}")));
            }
            let qi = &vq.data()[i * dk..(i + 1) * dk];
            let mut a: Vec<f64> = row
                .iter()
                .map(|&j| {
                    let kj = &vk.data()[j * dk..(j + 1) * dk];
                    let dot: f64 = qi.iter().zip(kj).map(|(x, y)| x * y).sum();
                    dot * scale + bd.map_or(0.0, |b| b[j])
                })
                .collect();
            let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in a.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            let orow = &mut out[i * dv..(i + 1) * dv];
            for (x, &j) in a.iter_mut().zip(row) {
                *x /= total;
                for (o, y) in orow.iter_mut().zip(&vv.data()[j * dv..(j + 1) * dv]) {
                    *o += *x * y;
                }
            }
            alpha.push(a);
        }
        let out = Tensor::new(&[nq, dv], out)?;
        let mut parents = vec![q, k, v];
        parents.extend(bias);
        let op = Op::Attention { q, k, v, bias, keys, scale, alpha };
        Ok(self.push(out, op, &parents))
    }

    /// Dense `N_q × N_k` weights of a [`Graph::sparse_attention`] node, zero
    /// outside each row's keys.
    pub fn attention_weights(&self, att: Var) -> Result<Tensor> {
        let Op::Attention { k, keys, alpha, .. } = &self.nodes[att.0].op else {
            return Err(Error::Usage("attention_weights needs a sparse_attention node".into()));
        };
        let nk = self.value(*k).rows();
        let mut dense = vec![0.0; keys.len() * nk];
        for (i, (row, a)) in keys.iter().zip(alpha).enumerate() {
            for (&j, &w) in row.iter().zip(a) {
                dense[i * nk + j] = w;
            }
        }
        Tensor::new(&[keys.len(), nk], dense)
    }

    /// Per-row standardization over the last axis, without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let vx = self.value(x);
        let n = vx.cols();
        let mut out = Vec::with_capacity(vx.len());
        let mut rstd = Vec::with_capacity(vx.rows());
        for row in vx.data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps).sqrt();
            out.extend(row.iter().map(|v| (v - mean) * rs));
            rstd.push(rs);
        }
        let out = Tensor::new(vx.shape(), out).expect("same shape");
        self.push(out, Op::LayerNorm { x, rstd }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s = vx.sum() / vx.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean over one axis, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let vx = self.value(x);
        let shape = vx.shape();
        if axis >= shape.len() {
            return Err(Error::Domain(format!("axis {axis} out of range for {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                for i in 0..inner {
                    out[o * inner + i] += vx.data()[(o * len + l) * inner + i];
                }
            }
        }
        for v in &mut out {
            *v /= len as f64;
        }
        let mut oshape = shape.to_vec();
        oshape[axis] = 1;
        let out = Tensor::new(&oshape, out)?;
        Ok(self.push(out, Op::MeanAxis { x, outer, len, inner }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?.with_requires_grad(false);
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let (m, n) = (vx.rows(), vx.cols());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = vx.data()[i * n + j];
            }
        }
        let out = Tensor::new(&[n, m], out).expect("transpose shape");
        self.push(out, Op::Transpose(x), &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = self.value(x);
        let n = vx.cols();
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", vx.shape(), &[start, len]));
        }
        let data = vx
            .data()
            .chunks(n)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let out = Tensor::new(&[vx.rows(), len], data)?;
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(Error::shape(
                "concat_cols",
                self.shape(parts[0]),
                self.shape(*p),
            ));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let v = self.value(*p);
                let n = v.cols();
                data.extend_from_slice(&v.data()[r * n..(r + 1) * n]);
            }
        }
        let out = Tensor::new(&[rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Inverted dropout. Identity (no new node) when `train` is off or `p`
    /// is zero. Masks come from a counter-based generator keyed on the graph
    /// seed and the call index, so runs are bit-reproducible.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("dropout p={p} outside [0,1)")));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let call = self.dropout_calls;
        self.dropout_calls += 1;
        let scale = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let keep_scale: Vec<f64> = (0..n as u64)
            .map(|i| {
                if self.rng.uniform(call, i) < p {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let vx = self.value(x);
        let data = vx.data().iter().zip(&keep_scale).map(|(a, b)| a * b).collect();
        let out = Tensor::new(vx.shape(), data)?;
        Ok(self.push(out, Op::Dropout { x, keep_scale }, &[x]))
    }

    /// Euclidean norm of each row; output `[rows, 1]`.
    pub fn row_norm(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let n = vx.cols();
        let data: Vec<f64> = vx
            .data()
            .chunks(n)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut h = self.kink_hash;
        for &v in &data {
            h = mix(h, (v == 0.0) as u64);
        }
        let rows = vx.rows();
        self.kink_hash = h;
        let out = Tensor::new(&[rows, 1], data).expect("row norm shape");
        self.push(out, Op::RowNorm(x), &[x])
    }

    /// `x·W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, g: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
        g(slot);
    }

    fn propagate(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                self.accumulate(grads, *a, |ga| {
                    let mut bt = vec![0.0; n * k];
                    for p in 0..k {
                        for j in 0..n {
                            bt[j * k + p] = vb.data()[p * n + j];
                        }
                    }
                    for i in 0..m {
                        let garow = &mut ga[i * k..(i + 1) * k];
                        for j in 0..n {
                            let gij = gy[i * n + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for (o, b) in garow.iter_mut().zip(&bt[j * k..(j + 1) * k]) {
                                *o += gij * b;
                            }
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = va.data()[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            let grow = &gy[i * n..(i + 1) * n];
                            let gbrow = &mut gb[p * n..(p + 1) * n];
                            for (o, g) in gbrow.iter_mut().zip(grow) {
                                *o += a_ip * g;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g, gy));
                self.accumulate(grads, *b, |g| add_into(g, gy));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g, gy));
                self.accumulate(grads, *b, |g| {
                    for (o, v) in g.iter_mut().zip(gy) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * vb[i];
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * va[i];
                    }
                });
            }
            Op::AddRow(x, b) => {
                let n = self.value(*x).cols();
                self.accumulate(grads, *x, |g| add_into(g, gy));
                self.accumulate(grads, *b, |g| {
                    for row in gy.chunks(n) {
                        add_into(g, row);
                    }
                });
            }
            Op::MulRow(x, s) => {
                let (vx, vs) = (self.value(*x), self.value(*s).data());
                let n = vx.cols();
                self.accumulate(grads, *x, |g| {
                    for (i, o) in g.iter_mut().enumerate() {
                        *o += gy[i] * vs[i % n];
                    }
                });
                self.accumulate(grads, *s, |g| {
                    for (i, v) in vx.data().iter().enumerate() {
                        g[i % n] += gy[i] * v;
                    }
                });
            }
            Op::MulCol(x, s) => {
                let (vx, vs) = (self.value(*x), self.value(*s).data());
                let n = vx.cols();
                self.accumulate(grads, *x, |g| {
                    for (i, o) in g.iter_mut().enumerate() {
                        *o += gy[i] * vs[i / n];
                    }
                });
                self.accumulate(grads, *s, |g| {
                    for (i, v) in vx.data().iter().enumerate() {
                        g[i / n] += gy[i] * v;
                    }
                });
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, |g| {
                    for (o, v) in g.iter_mut().zip(gy) {
                        *o += c * v;
                    }
                });
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                self.accumulate(grads, *x, |g| add_into(g, gy));
            }
            Op::Recip(x) => {
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] -= gy[i] * y[i] * y[i];
                    }
                });
            }
            Op::Sigmoid(x) => {
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        if vx[i] > 0.0 {
                            g[i] += gy[i];
                        }
                    }
                });
            }
            Op::Softmax { x, bias } => {
                let n = node.value.cols();
                let mut dz = vec![0.0; y.len()];
                for ((dzr, yr), gr) in dz.chunks_mut(n).zip(y.chunks(n)).zip(gy.chunks(n)) {
                    let s: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        dzr[c] = yr[c] * (gr[c] - s);
                    }
                }
                self.accumulate(grads, *x, |g| add_into(g, &dz));
                if let Some((b, broadcast)) = bias {
                    self.accumulate(grads, *b, |g| {
                        if *broadcast {
                            for row in dz.chunks(n) {
                                add_into(g, row);
                            }
                        } else {
                            add_into(g, &dz);
                        }
                    });
                }
            }
            Op::LayerNorm { x, rstd } => {
                let n = node.value.cols();
                self.accumulate(grads, *x, |g| {
                    for (r, ((gr, yr), gyr)) in
                        g.chunks_mut(n).zip(y.chunks(n)).zip(gy.chunks(n)).enumerate()
                    {
                        let mean_g = gyr.iter().sum::<f64>() / n as f64;
                        let mean_gy =
                            gyr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for c in 0..n {
                            gr[c] += rstd[r] * (gyr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                });
            }
            Op::Sum(x) => {
                self.accumulate(grads, *x, |g| g.iter_mut().for_each(|o| *o += gy[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                self.accumulate(grads, *x, |g| g.iter_mut().for_each(|o| *o += gy[0] / n));
            }
            Op::MeanAxis { x, outer, len, inner } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                self.accumulate(grads, *x, |g| {
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                g[(o * len + l) * inner + i] += gy[o * inner + i] / len as f64;
                            }
                        }
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                self.accumulate(grads, *x, |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] += gy[j * m + i];
                        }
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let n = self.value(*x).cols();
                let len = node.value.cols();
                self.accumulate(grads, *x, |g| {
                    for (gr, gyr) in g.chunks_mut(n).zip(gy.chunks(len)) {
                        add_into(&mut gr[*start..start + len], gyr);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).cols();
                    self.accumulate(grads, *p, |g| {
                        for (gr, gyr) in g.chunks_mut(len).zip(gy.chunks(total)) {
                            add_into(gr, &gyr[offset..offset + len]);
                        }
                    });
                    offset += len;
                }
            }
            Op::Dropout { x, keep_scale } => {
                self.accumulate(grads, *x, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * keep_scale[i];
                    }
                });
            }
            Op::RowNorm(x) => {
                let vx = self.value(*x);
                let n = vx.cols();
                self.accumulate(grads, *x, |g| {
                    for (r, (gr, xr)) in g.chunks_mut(n).zip(vx.data().chunks(n)).enumerate() {
                        if y[r] > 0.0 {
                            for c in 0..n {
                                gr[c] += gy[r] * xr[c] / y[r];
                            }
                        }
                    }
                });
            }
            Op::Attention { q, k, v, bias, keys, scale, alpha } => {
                let (vq, vk, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (dk, dv) = (vq.cols(), vv.cols());
                let mut gq = vec![0.0; vq.len()];
                let mut gk = vec![0.0; vk.len()];
                let mut gv = vec![0.0; vv.len()];
                let mut gb = vec![0.0; vk.rows()];
                for (i, (row, a)) in keys.iter().zip(alpha).enumerate() {
                    let gyi = &gy[i * dv..(i + 1) * dv];
                    let da: Vec<f64> = row
                        .iter()
                        .map(|&j| gyi.iter().zip(&vv.data()[j * dv..(j + 1) * dv]).map(|(x, y)| x * y).sum())
                        .collect();
                    let s: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
                    let qi = &vq.data()[i * dk..(i + 1) * dk];
                    for ((&j, &w), &d) in row.iter().zip(a).zip(&da) {
                        for (o, y) in gv[j * dv..(j + 1) * dv].iter_mut().zip(gyi) {
                            *o += w * y;
                        }
                        let dz = w * (d - s);
                        gb[j] += dz;
                        let c = dz * scale;
                        let kj = &vk.data()[j * dk..(j + 1) * dk];
                        for (o, y) in gq[i * dk..(i + 1) * dk].iter_mut().zip(kj) {
                            *o += c * y;
                        }
                        for (o, y) in gk[j * dk..(j + 1) * dk].iter_mut().zip(qi) {
                            *o += c * y;
                        }
                    }
                }
                self.accumulate(grads, *q, |g| add_into(g, &gq));
                self.accumulate(grads, *k, |g| add_into(g, &gk));
                self.accumulate(grads, *v, |g| add_into(g, &gv));
                if let Some(b) = bias {
                    self.accumulate(grads, *b, |g| add_into(g, &gb));
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += a_ip * bv;
            }
        }
    }
    out
}
