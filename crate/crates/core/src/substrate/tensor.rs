use serde::{Deserialize, Serialize};

use super::real::Real;
use crate::error::{Error, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<R = f32> {
    shape: Vec<usize>,
    data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("tensor", format!("dimensions must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, R::zero())
    }

    pub fn full(shape: &[usize], value: R) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: R) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<R>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<R>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// Builds a matrix from `f64` rows; handy in tests and oracles.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("from_rows", "ragged rows"));
        }
        let data = rows.iter().flatten().map(|&x| R::of(x)).collect();
        Self::matrix(rows.len(), cols, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    /// Number of rows when viewed as `[.., last_dim]`.
    pub fn outer(&self) -> usize {
        self.data.len() / self.last_dim()
    }

    pub fn row(&self, i: usize) -> &[R] {
        let d = self.last_dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [R] {
        let d = self.last_dim();
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn get(&self, index: &[usize]) -> R {
        assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| S::of(x.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor<R>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: R) {
        for a in &mut self.data {
            *a *= k;
        }
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|&x| x.to_f64() * x.to_f64()).sum()
    }

    /// Row-wise argmax over the last axis; ties resolve to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.outer()).map(|i| argmax(self.row(i))).collect()
    }
}

pub fn argmax<R: Real>(xs: &[R]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

// ---- eager kernels (no gradient tracking) ----

/// `a [m×k] · b [k×n]`, both row-major.
pub(crate) fn matmul_into<R: Real>(a: &[R], b: &[R], m: usize, k: usize, n: usize, out: &mut [R]) {
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        orow.fill(R::zero());
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == R::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Stabilized softmax of one row in place. `mask[j] == false` forces 0.
/// Returns false when every position is masked (row left all-zero).
pub(crate) fn softmax_row<R: Real>(row: &mut [R], mask: Option<&[bool]>) -> bool {
    let keep = |j: usize| mask.is_none_or(|m| m[j]);
    let mut max = R::neg_infinity();
    for (j, &x) in row.iter().enumerate() {
        if keep(j) {
            if x.is_nan() {
                row.fill(R::nan());
                return true;
            }
            if x > max {
                max = x;
            }
        }
    }
    if max == R::neg_infinity() {
        row.fill(R::zero());
        return false;
    }
    let mut total = R::zero();
    for (j, x) in row.iter_mut().enumerate() {
        if keep(j) {
            *x = (*x - max).exp();
            total += *x;
        } else {
            *x = R::zero();
        }
    }
    for x in row.iter_mut() {
        *x /= total;
    }
    true
}

pub const PROB_FLOOR: f64 = 1e-12;

/// Floors a probability at [`PROB_FLOOR`], letting NaN through so that a
/// diverged model still reports a non-finite loss.
pub(crate) fn floor_prob<R: Real>(p: R) -> R {
    if p.is_nan() {
        p
    } else {
        p.max(R::of(PROB_FLOOR))
    }
}

/// Row `i` of the result is `table[indices[i]]`.
pub fn embedding_lookup<R: Real>(table: &Tensor<R>, indices: &[usize]) -> Result<Tensor<R>> {
    if table.shape().len() != 2 {
        return Err(Error::shape("embedding_lookup", "table must be 2-D"));
    }
    let rows = table.shape()[0];
    let e = table.shape()[1];
    let mut data = Vec::with_capacity(indices.len() * e);
    for &ix in indices {
        if ix >= rows {
            return Err(Error::IndexOutOfRange {
                op: "embedding_lookup",
                index: ix,
                rows,
            });
        }
        data.extend_from_slice(table.row(ix));
    }
    Tensor::new(vec![indices.len(), e], data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Tanh,
}

/// `activation(x·W + b)` broadcast over the leading axes of `x`.
pub fn dense<R: Real>(x: &Tensor<R>, w: &Tensor<R>, b: &Tensor<R>, act: Activation) -> Result<Tensor<R>> {
    if w.shape().len() != 2 || b.shape() != [w.shape()[1]] || x.last_dim() != w.shape()[0] {
        return Err(Error::shape(
            "dense",
            format!("x {:?}, W {:?}, b {:?}", x.shape(), w.shape(), b.shape()),
        ));
    }
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let m = x.outer();
    let mut out = vec![R::zero(); m * n];
    matmul_into(x.data(), w.data(), m, k, n, &mut out);
    for row in out.chunks_mut(n) {
        for (o, &bv) in row.iter_mut().zip(b.data()) {
            *o += bv;
            if act == Activation::Tanh {
                *o = o.tanh();
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}

/// Softmax over the last axis. Masked positions are exactly zero; a fully
/// masked row is an error.
pub fn softmax<R: Real>(x: &Tensor<R>, mask: Option<&[bool]>) -> Result<Tensor<R>> {
    let n = x.last_dim();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::shape("softmax", format!("mask length {} vs {n}", m.len())));
        }
        if !m.iter().any(|&k| k) {
            return Err(Error::invalid("softmax: every position is masked"));
        }
    }
    let mut out = x.clone();
    for i in 0..out.outer() {
        softmax_row(out.row_mut(i), mask);
    }
    Ok(out)
}

/// Mean of `-ln p[t][target[t]]` over unmasked positions, probabilities
/// floored at 1e-12.
pub fn cross_entropy<R: Real>(probs: &Tensor<R>, targets: &[usize], mask: &[bool]) -> Result<R> {
    let v = probs.last_dim();
    if probs.outer() != targets.len() || targets.len() != mask.len() {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} rows, {} targets, {} mask", probs.outer(), targets.len(), mask.len()),
        ));
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (t, (&target, &keep)) in targets.iter().zip(mask).enumerate() {
        if !keep {
            continue;
        }
        if target >= v {
            return Err(Error::IndexOutOfRange {
                op: "cross_entropy",
                index: target,
                rows: v,
            });
        }
        let p = floor_prob(probs.row(t)[target].to_f64());
        total -= p.ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::invalid("cross_entropy: no unmasked positions"));
    }
    Ok(R::of(total / count as f64))
}
