//! Reverse-mode tape.
//!
//! Every operation records its output value and the handles of its inputs;
//! `backward` walks the record in reverse and accumulates gradients. The op
//! set is exactly what the GRU/attention models need, nothing more.

use std::collections::{BTreeMap, HashMap};

use super::params::ParamStore;
use super::real::Real;
use super::tensor::{floor_prob, matmul_into, softmax_row, Tensor, PROB_FLOOR};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    Gather { src: Var, idx: Vec<usize> },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    OneMinus(Var),
    Select { new: Var, old: Var, mask: Vec<bool> },
    Stack(Vec<Var>),
    Concat(Vec<Var>),
    Reshape(Var),
    BmmT(Var, Var),
    Bmm(Var, Var),
    MaskedSoftmax { src: Var },
    SoftmaxXent { logits: Var, targets: Vec<usize>, mask: Vec<bool> },
}

#[derive(Debug)]
struct Node<R> {
    value: Tensor<R>,
    op: Op,
    requires_grad: bool,
    /// softmax probabilities kept for the fused cross-entropy backward
    aux: Option<Tensor<R>>,
}

#[derive(Debug, Default)]
pub struct Tape<R = f32> {
    nodes: Vec<Node<R>>,
    bound: HashMap<String, Var>,
}

/// Gradients produced by [`Tape::backward`]. Only leaves (parameters and
/// the loss itself) keep their gradient; intermediates are released.
#[derive(Debug)]
pub struct Gradients<R> {
    grads: Vec<Option<Tensor<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<R>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn dims2<R: Real>(t: &Tensor<R>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::shape(op, format!("expected a matrix, got {s:?}"))),
    }
}

fn dims3<R: Real>(t: &Tensor<R>, op: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [b, m, n] => Ok((*b, *m, *n)),
        s => Err(Error::shape(op, format!("expected a 3-D tensor, got {s:?}"))),
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
fn matmul_nt_acc<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize, out: &mut [R]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = R::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
fn matmul_tn_acc<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize, out: &mut [R]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == R::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            bound: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<R>, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<R>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            requires_grad: false,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Binds a named parameter from `store`, once per tape.
    pub fn bind(&mut self, store: &ParamStore<R>, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = store
            .value(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?
            .clone();
        self.nodes.push(Node {
            value,
            op: Op::Param,
            requires_grad: true,
            aux: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    /// Rows of a 2-D `src` picked by `idx`; gradients scatter-add back.
    pub fn gather(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let s = self.value(src);
        let (rows, d) = dims2(s, "gather")?;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    op: "gather",
                    index: i,
                    rows,
                });
            }
            data.extend_from_slice(s.row(i));
        }
        let out = Tensor::new(vec![idx.len(), d], data)?;
        Ok(self.push(out, Op::Gather { src, idx: idx.to_vec() }, &[src]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a), "matmul")?;
        let (k2, n) = dims2(self.value(b), "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}×{k}]·[{k2}×{n}]")));
        }
        let mut out = vec![R::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a [.. × n] + bias [n]` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let n = self.value(a).last_dim();
        if self.value(bias).shape() != [n] {
            return Err(Error::shape(
                "add_bias",
                format!("{:?} + {:?}", self.value(a).shape(), self.value(bias).shape()),
            ));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(&b) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias), &[a, bias]))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    fn map(&mut self, a: Var, f: impl Fn(R) -> R, op: Op) -> Var {
        let mut out = self.value(a).clone();
        for o in out.data_mut() {
            *o = f(*o);
        }
        self.push(out, op, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, |x| R::one() / (R::one() + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |x| R::one() - x, Op::OneMinus(a))
    }

    /// Row `i` is `new[i]` where `mask[i]`, else `old[i]`.
    pub fn select_rows(&mut self, new: Var, old: Var, mask: &[bool]) -> Result<Var> {
        self.same_shape(new, old, "select_rows")?;
        let rows = self.value(new).outer();
        if mask.len() != rows {
            return Err(Error::shape("select_rows", format!("{} mask entries for {rows} rows", mask.len())));
        }
        let mut out = self.value(old).clone();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                let src = self.value(new).row(i).to_vec();
                out.row_mut(i).copy_from_slice(&src);
            }
        }
        Ok(self.push(
            out,
            Op::Select {
                new,
                old,
                mask: mask.to_vec(),
            },
            &[new, old],
        ))
    }

    /// Stacks `T` matrices `[B×d]` into `[B×T×d]`.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("stack", "nothing to stack"))?;
        let (b, d) = dims2(self.value(first), "stack")?;
        for &p in parts {
            if self.value(p).shape() != [b, d] {
                return Err(Error::shape("stack", "parts differ in shape"));
            }
        }
        let t = parts.len();
        let mut out = vec![R::zero(); b * t * d];
        for (ti, &p) in parts.iter().enumerate() {
            let v = self.value(p).data();
            for bi in 0..b {
                out[(bi * t + ti) * d..(bi * t + ti + 1) * d].copy_from_slice(&v[bi * d..(bi + 1) * d]);
            }
        }
        let out = Tensor::new(vec![b, t, d], out)?;
        Ok(self.push(out, Op::Stack(parts.to_vec()), parts))
    }

    /// Concatenates matrices `[M×dᵢ]` along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::shape("concat", "nothing to concat"))?;
        let m = dims2(self.value(first), "concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (mi, di) = dims2(self.value(p), "concat")?;
            if mi != m {
                return Err(Error::shape("concat", format!("row counts {m} vs {mi}")));
            }
            widths.push(di);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![m, total], out)?;
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Batched `a[b] · b[b]ᵀ`: `[B×T×k], [B×N×k] → [B×T×N]`.
    pub fn bmm_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, t, k) = dims3(self.value(a), "bmm_nt")?;
        let (bb, n, k2) = dims3(self.value(b), "bmm_nt")?;
        if ba != bb || k != k2 {
            return Err(Error::shape("bmm_nt", format!("[{ba}×{t}×{k}] vs [{bb}×{n}×{k2}]")));
        }
        let mut out = vec![R::zero(); ba * t * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..ba {
            matmul_nt_acc(
                &av[i * t * k..(i + 1) * t * k],
                &bv[i * n * k..(i + 1) * n * k],
                t,
                k,
                n,
                &mut out[i * t * n..(i + 1) * t * n],
            );
        }
        let out = Tensor::new(vec![ba, t, n], out)?;
        Ok(self.push(out, Op::BmmT(a, b), &[a, b]))
    }

    /// Batched `w[b] · v[b]`: `[B×T×N], [B×N×k] → [B×T×k]`.
    pub fn bmm(&mut self, w: Var, v: Var) -> Result<Var> {
        let (bw, t, n) = dims3(self.value(w), "bmm")?;
        let (bv_, n2, k) = dims3(self.value(v), "bmm")?;
        if bw != bv_ || n != n2 {
            return Err(Error::shape("bmm", format!("[{bw}×{t}×{n}] vs [{bv_}×{n2}×{k}]")));
        }
        let mut out = vec![R::zero(); bw * t * k];
        let (wv, vv) = (self.value(w).data(), self.value(v).data());
        for i in 0..bw {
            matmul_into(
                &wv[i * t * n..(i + 1) * t * n],
                &vv[i * n * k..(i + 1) * n * k],
                t,
                n,
                k,
                &mut out[i * t * k..(i + 1) * t * k],
            );
        }
        let out = Tensor::new(vec![bw, t, k], out)?;
        Ok(self.push(out, Op::Bmm(w, v), &[w, v]))
    }

    /// Softmax over the last axis of `[B×T×N]` with a `[B×N]` key mask shared
    /// across `T`. Rows whose keys are all masked come out all-zero.
    pub fn masked_softmax(&mut self, src: Var, mask: &[bool]) -> Result<Var> {
        let (b, t, n) = dims3(self.value(src), "masked_softmax")?;
        if mask.len() != b * n {
            return Err(Error::shape(
                "masked_softmax",
                format!("mask has {} entries, expected {}", mask.len(), b * n),
            ));
        }
        let mut out = self.value(src).clone();
        for bi in 0..b {
            let m = &mask[bi * n..(bi + 1) * n];
            for ti in 0..t {
                softmax_row(out.row_mut(bi * t + ti), Some(m));
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax { src }, &[src]))
    }

    /// Fused softmax + masked mean cross-entropy over rows of `[M×V]` logits.
    /// Returns a scalar node; probabilities are floored at 1e-12 before the log.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let (m, v) = dims2(self.value(logits), "softmax_cross_entropy")?;
        if targets.len() != m || mask.len() != m {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{m} rows, {} targets, {} mask", targets.len(), mask.len()),
            ));
        }
        let mut probs = self.value(logits).clone();
        for i in 0..m {
            softmax_row(probs.row_mut(i), None);
        }
        let mut total = R::zero();
        let mut count = 0usize;
        for i in 0..m {
            if !mask[i] {
                continue;
            }
            if targets[i] >= v {
                return Err(Error::IndexOutOfRange {
                    op: "softmax_cross_entropy",
                    index: targets[i],
                    rows: v,
                });
            }
            let p = floor_prob(probs.row(i)[targets[i]]);
            total -= p.ln();
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("cross_entropy: no unmasked positions"));
        }
        let loss = Tensor::scalar(total / R::of(count as f64));
        let var = self.push(
            loss,
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
            &[logits],
        );
        self.nodes[var.0].aux = Some(probs);
        Ok(var)
    }

    /// Gradients of the scalar `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor<R>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(R::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Param) {
                grads[idx] = Some(g);
                continue;
            }
            let acc = |v: Var, t: Tensor<R>, grads: &mut Vec<Option<Tensor<R>>>| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Input | Op::Param => {}
                Op::Gather { src, idx: rows } => {
                    if !self.nodes[src.0].requires_grad {
                        continue;
                    }
                    // scatter straight into the accumulator; tables can be large
                    let gs = grads[src.0].get_or_insert_with(|| Tensor::zeros(self.value(*src).shape()));
                    for (i, &r) in rows.iter().enumerate() {
                        for (o, &x) in gs.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = dims2(self.value(*a), "matmul")?;
                    let n = self.value(*b).shape()[1];
                    if self.nodes[a.0].requires_grad {
                        let mut ga = vec![R::zero(); m * k];
                        matmul_nt_acc(g.data(), self.value(*b).data(), m, n, k, &mut ga);
                        acc(*a, Tensor::new(vec![m, k], ga)?, &mut grads);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut gb = vec![R::zero(); k * n];
                        matmul_tn_acc(self.value(*a).data(), g.data(), m, k, n, &mut gb);
                        acc(*b, Tensor::new(vec![k, n], gb)?, &mut grads);
                    }
                }
                Op::AddBias(a, bias) => {
                    let n = g.last_dim();
                    let mut gb = vec![R::zero(); n];
                    for row in g.data().chunks(n) {
                        for (o, &x) in gb.iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    acc(*bias, Tensor::new(vec![n], gb)?, &mut grads);
                    acc(*a, g, &mut grads);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone(), &mut grads);
                    acc(*b, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let mut ga = g.clone();
                    for (o, &y) in ga.data_mut().iter_mut().zip(self.value(*b).data()) {
                        *o *= y;
                    }
                    let mut gb = g;
                    for (o, &x) in gb.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *o *= x;
                    }
                    acc(*a, ga, &mut grads);
                    acc(*b, gb, &mut grads);
                }
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    for (o, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= y * (R::one() - y);
                    }
                    acc(*a, ga, &mut grads);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    for (o, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= R::one() - y * y;
                    }
                    acc(*a, ga, &mut grads);
                }
                Op::OneMinus(a) => {
                    let mut ga = g;
                    ga.scale(-R::one());
                    acc(*a, ga, &mut grads);
                }
                Op::Select { new, old, mask } => {
                    let mut gn = g.clone();
                    let mut go = g;
                    for (i, &m) in mask.iter().enumerate() {
                        if m {
                            go.row_mut(i).fill(R::zero());
                        } else {
                            gn.row_mut(i).fill(R::zero());
                        }
                    }
                    acc(*new, gn, &mut grads);
                    acc(*old, go, &mut grads);
                }
                Op::Stack(parts) => {
                    let (b, t, d) = dims3(&g, "stack")?;
                    for (ti, &p) in parts.iter().enumerate() {
                        let mut gp = Vec::with_capacity(b * d);
                        for bi in 0..b {
                            gp.extend_from_slice(&g.data()[(bi * t + ti) * d..(bi * t + ti + 1) * d]);
                        }
                        acc(p, Tensor::new(vec![b, d], gp)?, &mut grads);
                    }
                }
                Op::Concat(parts) => {
                    let m = g.outer();
                    let mut offset = 0;
                    for &p in parts {
                        let d = self.value(p).last_dim();
                        let mut gp = Vec::with_capacity(m * d);
                        for i in 0..m {
                            gp.extend_from_slice(&g.row(i)[offset..offset + d]);
                        }
                        offset += d;
                        acc(p, Tensor::new(vec![m, d], gp)?, &mut grads);
                    }
                }
                Op::Reshape(a) => {
                    let ga = g.reshape(self.value(*a).shape())?;
                    acc(*a, ga, &mut grads);
                }
                Op::BmmT(a, b) => {
                    let (bs, t, k) = dims3(self.value(*a), "bmm_nt")?;
                    let n = self.value(*b).shape()[1];
                    let (av, bv, gv) = (self.value(*a).data(), self.value(*b).data(), g.data());
                    let mut ga = vec![R::zero(); bs * t * k];
                    let mut gb = vec![R::zero(); bs * n * k];
                    for i in 0..bs {
                        let gi = &gv[i * t * n..(i + 1) * t * n];
                        // dA = G·B, dB = Gᵀ·A
                        matmul_tn_acc_into_rows(gi, &bv[i * n * k..(i + 1) * n * k], t, n, k, &mut ga[i * t * k..(i + 1) * t * k]);
                        matmul_tn_acc(gi, &av[i * t * k..(i + 1) * t * k], t, n, k, &mut gb[i * n * k..(i + 1) * n * k]);
                    }
                    acc(*a, Tensor::new(vec![bs, t, k], ga)?, &mut grads);
                    acc(*b, Tensor::new(vec![bs, n, k], gb)?, &mut grads);
                }
                Op::Bmm(w, v) => {
                    let (bs, t, n) = dims3(self.value(*w), "bmm")?;
                    let k = self.value(*v).shape()[2];
                    let (wv, vv, gv) = (self.value(*w).data(), self.value(*v).data(), g.data());
                    let mut gw = vec![R::zero(); bs * t * n];
                    let mut gvv = vec![R::zero(); bs * n * k];
                    for i in 0..bs {
                        let gi = &gv[i * t * k..(i + 1) * t * k];
                        // dW = G·Vᵀ, dV = Wᵀ·G
                        matmul_nt_acc(gi, &vv[i * n * k..(i + 1) * n * k], t, k, n, &mut gw[i * t * n..(i + 1) * t * n]);
                        matmul_tn_acc(&wv[i * t * n..(i + 1) * t * n], gi, t, n, k, &mut gvv[i * n * k..(i + 1) * n * k]);
                    }
                    acc(*w, Tensor::new(vec![bs, t, n], gw)?, &mut grads);
                    acc(*v, Tensor::new(vec![bs, n, k], gvv)?, &mut grads);
                }
                Op::MaskedSoftmax { src } => {
                    let n = node.value.last_dim();
                    let mut gs = g;
                    for (grow, prow) in gs.data_mut().chunks_mut(n).zip(node.value.data().chunks(n)) {
                        let dot: R = grow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                        for (o, &p) in grow.iter_mut().zip(prow) {
                            *o = p * (*o - dot);
                        }
                    }
                    acc(*src, gs, &mut grads);
                }
                Op::SoftmaxXent { logits, targets, mask } => {
                    let probs = node.aux.as_ref().expect("cross-entropy keeps its probabilities");
                    let count = mask.iter().filter(|&&m| m).count();
                    let scale = g.data()[0] / R::of(count as f64);
                    let mut gl = Tensor::zeros(probs.shape());
                    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if !m || probs.row(i)[t] < R::of(PROB_FLOOR) {
                            continue;
                        }
                        let row = gl.row_mut(i);
                        for (o, &p) in row.iter_mut().zip(probs.row(i)) {
                            *o = p * scale;
                        }
                        row[t] -= scale;
                    }
                    acc(*logits, gl, &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients of every bound parameter, keyed by name. Parameters of
    /// `store` that this tape never bound get zero gradients.
    pub fn param_grads(&self, grads: &Gradients<R>, store: &ParamStore<R>) -> BTreeMap<String, Tensor<R>> {
        store
            .names()
            .map(|name| {
                let g = self
                    .bound
                    .get(name)
                    .and_then(|&v| grads.wrt(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros(store.value(name).expect("name from store").shape()));
                (name.to_string(), g)
            })
            .collect()
    }
}

/// `out[m×k] += g[m×n] · b[n×k]`
fn matmul_tn_acc_into_rows<R: Real>(g: &[R], b: &[R], m: usize, n: usize, k: usize, out: &mut [R]) {
    for i in 0..m {
        let orow = &mut out[i * k..(i + 1) * k];
        for j in 0..n {
            let gv = g[i * n + j];
            if gv == R::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[j * k..(j + 1) * k]) {
                *o += gv * bv;
            }
        }
    }
}
