//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation applied to its variables. Calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and returns the
//! gradient of that scalar with respect to every leaf that requires one.
//!
//! There is no implicit broadcasting. Binary elementwise ops demand identical
//! shapes; row-wise bias, row scaling and row selection are separate ops.

use crate::error::{Error, Result};
use crate::tensor::{ParameterSet, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        r: usize,
        k: usize,
        c: usize,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        transpose_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Abs(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    OneMinus(Var),
    Scale(Var, f64),
    Softmax(Var),
    Concat {
        inputs: Vec<Var>,
        outer: usize,
        blocks: Vec<usize>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
        width: usize,
    },
    CrossEntropy {
        probs: Var,
        targets: Vec<usize>,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    ScaleRows {
        x: Var,
        s: Var,
    },
    SumAxis {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    SumAll(Var),
    Reshape(Var),
    Select {
        mask: Vec<bool>,
        a: Var,
        b: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<String>,
}

/// Recorded computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, String)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of every parameter leaf into the matching tensor's
    /// `grad` buffer. Existing gradients are accumulated, not replaced.
    pub fn accumulate_into(&self, params: &mut ParameterSet) {
        for (idx, name) in &self.params {
            let Some(g) = self.grads[*idx].as_deref() else {
                continue;
            };
            let Some(t) = params.get_mut(name) else {
                continue;
            };
            match &mut t.grad {
                Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
                None => t.grad = Some(g.to_vec()),
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, v)| *a += v),
        None => *slot = Some(contrib),
    }
}

/// `out[r x c] += a[r x k] * b[k x c]`, each output summed over `k` in order.
fn mm_acc(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let brow = &b[kk * c..(kk + 1) * c];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[r x c] += a[r x k] * b[c x k]^T`.
fn mm_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..c {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * c + j] += s;
        }
    }
}

/// `out[k x c] += a[r x k]^T * b[r x c]`.
fn mm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let brow = &b[i * c..(i + 1) * c];
        for kk in 0..k {
            let aik = a[i * k + kk];
            let orow = &mut out[kk * c..(kk + 1) * c];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax of one slice, written into `out`.
fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

const CE_CLAMP: f64 = 1e-12;

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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that receives gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Binds a named parameter as a gradient-receiving leaf.
    pub fn param(&mut self, params: &ParameterSet, name: &str) -> Result<Var> {
        let t = params
            .get(name)
            .ok_or_else(|| Error::usage(format!("unknown parameter `{name}`")))?;
        let mut value = t.clone();
        value.grad = None;
        let v = self.push(value, Op::Leaf, true);
        self.nodes[v.0].param = Some(name.to_string());
        Ok(v)
    }

    /// Same value, cut from the tape.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let data = self.data(a).iter().map(|x| f(*x)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", sa, sb));
        }
        let (r, k, c) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; r * c];
        mm_acc(self.data(a), self.data(b), &mut out, r, k, c);
        let value = Tensor::new(vec![r, c], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, r, k, c }, rg))
    }

    /// Batched product of rank-3 tensors: `[B,m,k] x [B,k,n]`, or
    /// `[B,m,k] x [B,n,k]^T` when `transpose_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if transpose_b {
                sa[2] == sb[2]
            } else {
                sa[2] == sb[1]
            };
        if !ok {
            return Err(Error::dim("batch_matmul", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_b { sb[1] } else { sb[2] };
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.data(a), self.data(b));
        for bt in 0..batch {
            let ab = &da[bt * m * k..(bt + 1) * m * k];
            let bb = &db[bt * k * n..(bt + 1) * k * n];
            let ob = &mut out[bt * m * n..(bt + 1) * m * n];
            if transpose_b {
                mm_nt_acc(ab, bb, ob, m, k, n);
            } else {
                mm_acc(ab, bb, ob, m, k, n);
            }
        }
        let value = Tensor::new(vec![batch, m, n], out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            value,
            Op::BatchMatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                transpose_b,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 - x, Op::OneMinus(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if !x.all_finite() {
            return Err(Error::NumericInput { op: "softmax" });
        }
        let d = x.last_dim();
        if d == 0 {
            return Err(Error::dim("softmax", x.shape(), &[1]));
        }
        let mut out = vec![0.0; x.numel()];
        for (xs, os) in x.data().chunks(d).zip(out.chunks_mut(d)) {
            softmax_slice(xs, os);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Softmax(a), rg))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::usage("concat of zero tensors"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", &base, &[axis]));
        }
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s
                    .iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let blocks: Vec<usize> = inputs
            .iter()
            .map(|&v| self.shape(v)[axis] * inner)
            .collect();
        let total: usize = blocks.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&v, &blk) in inputs.iter().zip(&blocks) {
                out.extend_from_slice(&self.data(v)[o * blk..(o + 1) * blk]);
            }
        }
        let value = Tensor::new(out_shape, out)?;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                outer,
                blocks,
            },
            rg,
        ))
    }

    /// Gathers rows of a `[V, E]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::dim("embedding", s, &[0, 0]));
        }
        let (vocab, width) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Vocabulary {
                id: bad,
                size: vocab,
            });
        }
        let data = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&data[id * width..(id + 1) * width]);
        }
        let value = Tensor::new(vec![ids.len(), width], out)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                width,
            },
            rg,
        ))
    }

    /// Mean over rows of `-ln(max(p[target], 1e-12))`. `probs` is `[v]` for a
    /// single prediction or `[B, v]` with one target per row.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(probs);
        let v = x.last_dim();
        let rows = x.numel() / v.max(1);
        if rows != targets.len() || rows == 0 {
            return Err(Error::dim("cross_entropy", x.shape(), &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Vocabulary { id: bad, size: v });
        }
        let data = x.data();
        let total: f64 = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -data[r * v + t].max(CE_CLAMP).ln())
            .sum();
        let value = Tensor::scalar(total / rows as f64);
        let rg = self.rg(probs);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
            },
            rg,
        ))
    }

    /// Adds a `[H]` bias to every row of a tensor whose last axis is `H`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        let h = *sx.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != h {
            return Err(Error::dim("add_bias", sx, sb));
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(h.max(1))
            .flat_map(|row| row.iter().zip(b).map(|(v, c)| v + c))
            .collect();
        let value = Tensor::new(sx.to_vec(), out)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias { x, bias }, rg))
    }

    /// Multiplies row `r` of a `[R, d]` tensor by `s[r]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (sx, ss) = (self.shape(x), self.shape(s));
        if sx.len() != 2 || self.value(s).numel() != sx[0] {
            return Err(Error::dim("scale_rows", sx, ss));
        }
        let d = sx[1];
        let sc = self.data(s);
        let out = self
            .data(x)
            .chunks(d.max(1))
            .zip(sc)
            .flat_map(|(row, c)| row.iter().map(move |v| v * c))
            .collect();
        let value = Tensor::new(sx.to_vec(), out)?;
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(value, Op::ScaleRows { x, s }, rg))
    }

    /// Sums over `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::dim("sum_axis", &sx, &[axis]));
        }
        let outer: usize = sx[..axis].iter().product();
        let len = sx[axis];
        let inner: usize = sx[axis + 1..].iter().product();
        let data = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &data[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = sx.clone();
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        let value = Tensor::new(shape, out)?;
        let rg = self.rg(x);
        Ok(self.push(
            value,
            Op::SumAxis {
                x,
                outer,
                len,
                inner,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.data(x).iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::SumAll(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().with_shape(shape.to_vec())?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Row-wise choice: row `r` of the result is row `r` of `a` when
    /// `mask[r]`, otherwise row `r` of `b`. Values are copied exactly.
    pub fn select_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        self.same_shape("select_rows", a, b)?;
        let sa = self.shape(a).to_vec();
        if sa.first() != Some(&mask.len()) {
            return Err(Error::dim("select_rows", &sa, &[mask.len()]));
        }
        let w = self.value(a).numel() / mask.len().max(1);
        let (da, db) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(da.len());
        for (r, &m) in mask.iter().enumerate() {
            let src = if m { da } else { db };
            out.extend_from_slice(&src[r * w..(r + 1) * w]);
        }
        let value = Tensor::new(sa, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            value,
            Op::Select {
                mask: mask.to_vec(),
                a,
                b,
            },
            rg,
        ))
    }

    /// Reverse pass from a scalar. Returns gradients for every node that
    /// requires one; leaf gradients are kept, intermediates are dropped.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.clone().map(|p| (i, p)))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, r, k, c } => {
                if want(a) {
                    let mut da = vec![0.0; r * k];
                    mm_nt_acc(g, self.data(b), &mut da, r, c, k);
                    accumulate(&mut grads[a.0], da);
                }
                if want(b) {
                    let mut db = vec![0.0; k * c];
                    mm_tn_acc(self.data(a), g, &mut db, r, k, c);
                    accumulate(&mut grads[b.0], db);
                }
            }
            &Op::BatchMatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
                transpose_b,
            } => {
                let (xa, xb) = (self.data(a), self.data(b));
                if want(a) {
                    let mut da = vec![0.0; batch * m * k];
                    for bt in 0..batch {
                        let gb = &g[bt * m * n..(bt + 1) * m * n];
                        let bb = &xb[bt * k * n..(bt + 1) * k * n];
                        let out = &mut da[bt * m * k..(bt + 1) * m * k];
                        if transpose_b {
                            // y = a b^T, b is [n, k]: da = g b
                            mm_acc(gb, bb, out, m, n, k);
                        } else {
                            // b is [k, n]: da = g b^T
                            mm_nt_acc(gb, bb, out, m, n, k);
                        }
                    }
                    accumulate(&mut grads[a.0], da);
                }
                if want(b) {
                    let mut db = vec![0.0; batch * k * n];
                    for bt in 0..batch {
                        let gb = &g[bt * m * n..(bt + 1) * m * n];
                        let ab = &xa[bt * m * k..(bt + 1) * m * k];
                        let out = &mut db[bt * k * n..(bt + 1) * k * n];
                        if transpose_b {
                            // db = g^T a, [n, k]
                            mm_tn_acc(gb, ab, out, m, n, k);
                        } else {
                            // db = a^T g, [k, n]
                            mm_tn_acc(ab, gb, out, m, k, n);
                        }
                    }
                    accumulate(&mut grads[b.0], db);
                }
            }
            &Op::Add(a, b) => {
                if want(a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if want(b) {
                    accumulate(&mut grads[b.0], g.to_vec());
                }
            }
            &Op::Sub(a, b) => {
                if want(a) {
                    accumulate(&mut grads[a.0], g.to_vec());
                }
                if want(b) {
                    accumulate(&mut grads[b.0], g.iter().map(|v| -v).collect());
                }
            }
            &Op::Mul(a, b) => {
                if want(a) {
                    let d = g.iter().zip(self.data(b)).map(|(g, y)| g * y).collect();
                    accumulate(&mut grads[a.0], d);
                }
                if want(b) {
                    let d = g.iter().zip(self.data(a)).map(|(g, x)| g * x).collect();
                    accumulate(&mut grads[b.0], d);
                }
            }
            &Op::Abs(a) => {
                let d = g
                    .iter()
                    .zip(self.data(a))
                    .map(|(g, x)| {
                        if *x > 0.0 {
                            *g
                        } else if *x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate(&mut grads[a.0], d);
            }
            &Op::Tanh(a) => {
                let d = g.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                accumulate(&mut grads[a.0], d);
            }
            &Op::Sigmoid(a) => {
                let d = g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                accumulate(&mut grads[a.0], d);
            }
            &Op::Relu(a) => {
                let d = g
                    .iter()
                    .zip(self.data(a))
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(&mut grads[a.0], d);
            }
            &Op::OneMinus(a) => {
                accumulate(&mut grads[a.0], g.iter().map(|v| -v).collect());
            }
            &Op::Scale(a, c) => {
                accumulate(&mut grads[a.0], g.iter().map(|v| v * c).collect());
            }
            &Op::Softmax(a) => {
                let d = node.value.last_dim();
                let mut dx = vec![0.0; y.len()];
                for ((ys, gs), out) in y.chunks(d).zip(g.chunks(d)).zip(dx.chunks_mut(d)) {
                    let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                    for ((o, y), g) in out.iter_mut().zip(ys).zip(gs) {
                        *o = y * (g - dot);
                    }
                }
                accumulate(&mut grads[a.0], dx);
            }
            Op::Concat {
                inputs,
                outer,
                blocks,
            } => {
                let total: usize = blocks.iter().sum();
                let mut offset = 0;
                for (&v, &blk) in inputs.iter().zip(blocks) {
                    if want(v) {
                        let mut d = Vec::with_capacity(outer * blk);
                        for o in 0..*outer {
                            let start = o * total + offset;
                            d.extend_from_slice(&g[start..start + blk]);
                        }
                        accumulate(&mut grads[v.0], d);
                    }
                    offset += blk;
                }
            }
            Op::Embedding { table, ids, width } => {
                let mut d = vec![0.0; self.value(*table).numel()];
                for (row, &id) in ids.iter().enumerate() {
                    let src = &g[row * width..(row + 1) * width];
                    for (o, s) in d[id * width..(id + 1) * width].iter_mut().zip(src) {
                        *o += s;
                    }
                }
                accumulate(&mut grads[table.0], d);
            }
            Op::CrossEntropy { probs, targets } => {
                let x = self.value(*probs);
                let v = x.last_dim();
                let scale = g[0] / targets.len() as f64;
                let mut d = vec![0.0; x.numel()];
                for (r, &t) in targets.iter().enumerate() {
                    let p = x.data()[r * v + t];
                    if p > CE_CLAMP {
                        d[r * v + t] = -scale / p;
                    }
                }
                accumulate(&mut grads[probs.0], d);
            }
            &Op::AddBias { x, bias } => {
                if want(x) {
                    accumulate(&mut grads[x.0], g.to_vec());
                }
                if want(bias) {
                    let h = self.value(bias).numel();
                    let mut d = vec![0.0; h];
                    for row in g.chunks(h) {
                        d.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                    }
                    accumulate(&mut grads[bias.0], d);
                }
            }
            &Op::ScaleRows { x, s } => {
                let w = node.value.last_dim();
                let sc = self.data(s);
                if want(x) {
                    let d = g
                        .chunks(w)
                        .zip(sc)
                        .flat_map(|(row, c)| row.iter().map(move |v| v * c))
                        .collect();
                    accumulate(&mut grads[x.0], d);
                }
                if want(s) {
                    let d = g
                        .chunks(w)
                        .zip(self.data(x).chunks(w))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    accumulate(&mut grads[s.0], d);
                }
            }
            &Op::SumAxis {
                x,
                outer,
                len,
                inner,
            } => {
                let mut d = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let start = (o * len + l) * inner;
                        d[start..start + inner].copy_from_slice(src);
                    }
                }
                accumulate(&mut grads[x.0], d);
            }
            &Op::SumAll(x) => {
                accumulate(&mut grads[x.0], vec![g[0]; self.value(x).numel()]);
            }
            &Op::Reshape(x) => {
                accumulate(&mut grads[x.0], g.to_vec());
            }
            Op::Select { mask, a, b } => {
                let w = node.value.numel() / mask.len().max(1);
                for (var, take) in [(*a, true), (*b, false)] {
                    if !want(var) {
                        continue;
                    }
                    let mut d = vec![0.0; g.len()];
                    for (r, &m) in mask.iter().enumerate() {
                        if m == take {
                            d[r * w..(r + 1) * w].copy_from_slice(&g[r * w..(r + 1) * w]);
                        }
                    }
                    accumulate(&mut grads[var.0], d);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_examples() {
        let mut g = Graph::new();
        let id = g.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let b = g.constant(m(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let p = g.matmul(id, b).unwrap();
        assert_eq!(g.value(p).data(), &[5.0, 6.0, 7.0, 8.0]);

        let a = g.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let p = g.matmul(a, b).unwrap();
        assert_eq!(g.value(p).data(), &[19.0, 22.0, 43.0, 50.0]);

        let z = g.constant(Tensor::zeros(&[2, 2]));
        let p = g.matmul(z, b).unwrap();
        assert!(g.value(p).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { op: "matmul", .. }));
    }

    #[test]
    fn elementwise_examples() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(0.0));
        let t = g.tanh(x);
        assert_eq!(g.value(t).item(), 0.0);
        let grads = g.backward(t).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[1.0]);

        let s = g.sigmoid(x);
        assert_eq!(g.value(s).item(), 0.5);

        let n = g.constant(Tensor::scalar(-0.1));
        let a = g.abs(n);
        assert_eq!(g.value(a).item(), 0.1);
    }

    #[test]
    fn abs_gradient_at_zero_is_zero() {
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![0.0, 2.0, -3.0]));
        let a = g.abs(x);
        let s = g.sum(a);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[0.0, 1.0, -1.0]);
    }

    #[test]
    fn binary_ops_reject_mismatched_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2]));
        let b = g.constant(Tensor::zeros(&[1, 2]));
        assert!(g.add(a, b).is_err());
        assert!(g.mul(a, b).is_err());
        assert!(g.sub(a, b).is_err());
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let s = g.softmax(x).unwrap();
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let s = g.softmax(x).unwrap();
        let expect = [0.09003, 0.24473, 0.66524];
        for (a, e) in g.value(s).data().iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-5);
        }

        let x = g.constant(Tensor::vector(vec![1000.0, 0.0]));
        let s = g.softmax(x).unwrap();
        assert_eq!(g.value(s).data()[0], 1.0);
        assert!(g.value(s).data()[1] < 1e-300);
    }

    #[test]
    fn softmax_rejects_non_finite() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![f64::NAN, 0.0]));
        assert!(matches!(
            g.softmax(x),
            Err(Error::NumericInput { op: "softmax" })
        ));
    }

    #[test]
    fn concat_examples() {
        let mut g = Graph::new();
        let x = g.constant(m(&[&[1.0, 2.0]]));
        let c = g.concat(&[x], 0).unwrap();
        assert_eq!(g.value(c), g.value(x));

        let a = g.constant(m(&[&[1.0], &[2.0]]));
        let b = g.constant(m(&[&[3.0], &[4.0]]));
        let c = g.concat(&[a, b], 0).unwrap();
        assert_eq!(g.value(c).shape(), &[4, 1]);
        assert_eq!(g.value(c).data(), &[1.0, 2.0, 3.0, 4.0]);

        let vs: Vec<Var> = (0..4)
            .map(|i| g.constant(Tensor::filled(&[5], i as f64)))
            .collect();
        let c = g.concat(&vs, 0).unwrap();
        assert_eq!(g.value(c).shape(), &[20]);

        let bad = g.constant(Tensor::zeros(&[2, 3]));
        assert!(g.concat(&[a, bad], 0).is_err());
    }

    #[test]
    fn concat_last_axis_interleaves_rows() {
        let mut g = Graph::new();
        let a = g.constant(m(&[&[1.0], &[2.0]]));
        let b = g.constant(m(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = g.concat(&[a, b], 1).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    }

    #[test]
    fn embedding_examples() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let table = g.input(Tensor::new(vec![5, 4], data).unwrap());
        let e = g.embedding(table, &[0, 0]).unwrap();
        assert_eq!(g.value(e).data(), &[0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);

        let e = g.embedding(table, &[3, 3]).unwrap();
        let s = g.sum(e);
        let grads = g.backward(s).unwrap();
        let gt = grads.get(table).unwrap();
        assert_eq!(&gt[12..16], &[2.0; 4]);
        assert!(gt[..12].iter().all(|&v| v == 0.0));

        let e = g.embedding(table, &[]).unwrap();
        assert_eq!(g.value(e).shape(), &[0, 4]);

        match g.embedding(table, &[7]) {
            Err(Error::Vocabulary { id: 7, size: 5 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::vector(vec![0.25; 4]));
        let l = g.cross_entropy(p, &[2]).unwrap();
        assert_abs_diff_eq!(g.value(l).item(), 4f64.ln(), epsilon = 1e-12);

        let p = g.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let l = g.cross_entropy(p, &[1]).unwrap();
        assert_eq!(g.value(l).item(), 0.0);

        let p = g.constant(Tensor::vector(vec![0.25, 0.75]));
        let l = g.cross_entropy(p, &[0]).unwrap();
        assert_abs_diff_eq!(g.value(l).item(), 1.38629, epsilon = 1e-5);

        assert!(matches!(
            g.cross_entropy(p, &[2]),
            Err(Error::Vocabulary { id: 2, size: 2 })
        ));
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let mut g = Graph::new();
        let p = g.input(Tensor::vector(vec![0.0, 1.0]));
        let l = g.cross_entropy(p, &[0]).unwrap();
        assert_abs_diff_eq!(g.value(l).item(), -(1e-12f64).ln(), epsilon = 1e-9);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(p).unwrap().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn square_derivative() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2]));
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut params = ParameterSet::empty(0);
        params.insert("w", Tensor::scalar(3.0));
        for _ in 0..2 {
            let mut g = Graph::new();
            let w = g.param(&params, "w").unwrap();
            let y = g.mul(w, w).unwrap();
            g.backward(y).unwrap().accumulate_into(&mut params);
        }
        assert_eq!(params.get("w").unwrap().grad.as_deref(), Some(&[12.0][..]));
    }

    #[test]
    fn select_rows_copies_exactly() {
        let mut g = Graph::new();
        let a = g.input(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = g.input(m(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let s = g.select_rows(&[true, false], a, b).unwrap();
        assert_eq!(g.value(s).data(), &[1.0, 2.0, 7.0, 8.0]);
        let t = g.sum(s);
        let grads = g.backward(t).unwrap();
        assert_eq!(grads.get(a).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(grads.get(b).unwrap(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let x = g.input(Tensor::scalar(5.0));
        let y = g.mul(c, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap(), &[2.0]);
    }
}
