//! Dense reverse-mode differentiation over `f64` tensors.
//!
//! A [`Tape`] records every primitive in execution order. Because a node can
//! only reference nodes that already exist, the record is topologically sorted
//! by construction and the backward sweep is a single reverse pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector is treated as degenerate by [`Tape::cosine_sim`].
pub const MIN_NORM: f64 = 1e-12;

/// Dense row-major tensor. A scalar has an empty shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.values)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Dimension {
                op: "tensor",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Tensor { shape, values })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            values: vec![value],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    op: "from_rows",
                    left: vec![cols],
                    right: vec![row.len()],
                });
            }
            values.extend_from_slice(row);
        }
        Tensor::matrix(rows.len(), cols, values)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![value; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Tensor {
            shape: vec![n, n],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    pub fn item(&self) -> f64 {
        self.values[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Plain (untracked) matrix product, used for constant preprocessing.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k, n, shape) = matmul_dims(self, other)?;
        let mut out = vec![0.0; m * n];
        gemm_nn(&self.values, &other.values, &mut out, m, k, n);
        Tensor::new(shape, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Keeps the listed columns of a matrix, in order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::Contract("select_columns needs a matrix".into()));
        }
        let width = self.cols();
        if let Some(&bad) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::Index {
                index: bad,
                len: width,
            });
        }
        let rows = self.rows();
        let mut values = Vec::with_capacity(rows * cols.len());
        for r in 0..rows {
            let row = self.row(r);
            values.extend(cols.iter().map(|&c| row[c]));
        }
        Tensor::matrix(rows, cols.len(), values)
    }
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, Vec<usize>)> {
    let mismatch = || Error::Dimension {
        op: "matmul",
        left: a.shape.clone(),
        right: b.shape.clone(),
    };
    if b.shape.len() != 2 {
        return Err(mismatch());
    }
    let (k2, n) = (b.shape[0], b.shape[1]);
    match a.shape.len() {
        1 if a.shape[0] == k2 => Ok((1, k2, n, vec![n])),
        2 if a.shape[1] == k2 => Ok((a.shape[0], k2, n, vec![a.shape[0], n])),
        _ => Err(mismatch()),
    }
}

// C += A·B with A: m×k, B: k×n. Zero entries of A are skipped, which makes
// products against sparse propagation matrices cheap.
fn gemm_nn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &y) in out.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
}

// C += A·Bᵀ with A: m×n, B: k×n, C: m×k.
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            c[i * k + p] += dot;
        }
    }
}

// C += Aᵀ·B with A: m×k, B: m×n, C: k×n.
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let out = &mut c[p * n..(p + 1) * n];
            for (o, &y) in out.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
}

fn cosine_parts(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    for norm in [norm_a, norm_b] {
        // NaN norms fall through here too.
        if !(norm >= MIN_NORM) {
            return Err(Error::DegenerateVector { norm });
        }
    }
    Ok((dot, norm_a, norm_b))
}

/// Untracked cosine similarity with the same arithmetic as [`Tape::cosine_sim`].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            op: "cosine",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    let (dot, na, nb) = cosine_parts(a, b)?;
    Ok(dot / (na * nb))
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operator selector for [`Tape::elementwise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise {
    Add,
    Mul,
    Relu,
    Scale(f64),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add { a: Var, b: Var, broadcast: bool },
    Mul { a: Var, b: Var, broadcast: bool },
    Relu(Var),
    Scale(Var, f64),
    Sum(Var),
    SumRows { a: Var, rows: Vec<usize> },
    Row { a: Var, row: usize },
    Stack(Vec<Var>),
    Cosine { a: Var, b: Var, dot: f64, norm_a: f64, norm_b: f64 },
    SoftmaxNll { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<Tensor> {
        self.grads[var.0].as_ref().map(|g| Tensor {
            shape: self.shapes[var.0].clone(),
            values: g.clone(),
        })
    }

    /// Gradient values for `var`, zeros when `var` does not reach the root.
    pub fn values_or_zero(&self, var: Var) -> Vec<f64> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.shapes[var.0].iter().product()],
        }
    }
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

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf (gradients are reported for it).
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Constant leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<bool> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(false);
        }
        if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            return Ok(true);
        }
        Err(Error::Dimension {
            op,
            left: sa.to_vec(),
            right: sb.to_vec(),
        })
    }

    fn zip_broadcast(&self, a: Var, b: Var, broadcast: bool, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let values = if broadcast {
            let cols = tb.len();
            ta.values
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, tb.values[i % cols]))
                .collect()
        } else {
            ta.values
                .iter()
                .zip(&tb.values)
                .map(|(&x, &y)| f(x, y))
                .collect()
        };
        Tensor {
            shape: ta.shape.clone(),
            values,
        }
    }

    /// `a + b`; `b` may be a vector broadcast along the last axis of matrix `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = self.broadcast_kind("add", a, b)?;
        let value = self.zip_broadcast(a, b, broadcast, |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Add { a, b, broadcast }, value, rg))
    }

    /// `a ⊙ b`; broadcasting as in [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let broadcast = self.broadcast_kind("mul", a, b)?;
        let value = self.zip_broadcast(a, b, broadcast, |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Op::Mul { a, b, broadcast }, value, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.any_grad(&[a]);
        self.push(Op::Relu(a), value, rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.any_grad(&[a]);
        self.push(Op::Scale(a, factor), value, rg)
    }

    /// Dispatches one of the elementwise primitives by selector.
    pub fn elementwise(&mut self, op: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let need_b = || Error::Contract(format!("{op:?} needs a second operand"));
        match op {
            Elementwise::Add => self.add(a, b.ok_or_else(need_b)?),
            Elementwise::Mul => self.mul(a, b.ok_or_else(need_b)?),
            Elementwise::Relu => Ok(self.relu(a)),
            Elementwise::Scale(f) => Ok(self.scale(a, f)),
        }
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).values.iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Op::Sum(a), Tensor::scalar(total), rg)
    }

    /// Sum of the selected rows of a matrix (repeats count once per mention).
    pub fn sum_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(Error::Contract("sum_rows needs a matrix".into()));
        }
        if rows.is_empty() {
            return Err(Error::EmptyReadout);
        }
        let n = t.rows();
        let mut out = vec![0.0; t.cols()];
        for &r in rows {
            if r >= n {
                return Err(Error::Index { index: r, len: n });
            }
            for (o, &x) in out.iter_mut().zip(t.row(r)) {
                *o += x;
            }
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(
            Op::SumRows {
                a,
                rows: rows.to_vec(),
            },
            Tensor::vector(out),
            rg,
        ))
    }

    /// One row of a matrix as a vector.
    pub fn row(&mut self, a: Var, row: usize) -> Result<Var> {
        let t = self.value(a);
        if t.shape.len() != 2 {
            return Err(Error::Contract("row needs a matrix".into()));
        }
        if row >= t.rows() {
            return Err(Error::Index {
                index: row,
                len: t.rows(),
            });
        }
        let value = Tensor::vector(t.row(row).to_vec());
        let rg = self.any_grad(&[a]);
        Ok(self.push(Op::Row { a, row }, value, rg))
    }

    /// Packs scalars into a vector.
    pub fn stack(&mut self, scalars: &[Var]) -> Result<Var> {
        let mut values = Vec::with_capacity(scalars.len());
        for &s in scalars {
            let t = self.value(s);
            if !t.is_scalar() {
                return Err(Error::Dimension {
                    op: "stack",
                    left: vec![],
                    right: t.shape.clone(),
                });
            }
            values.push(t.item());
        }
        let rg = self.any_grad(scalars);
        Ok(self.push(Op::Stack(scalars.to_vec()), Tensor::vector(values), rg))
    }

    /// Cosine similarity of two equal-length vectors.
    pub fn cosine_sim(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 1 || ta.shape != tb.shape {
            return Err(Error::Dimension {
                op: "cosine_sim",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (dot, norm_a, norm_b) = cosine_parts(&ta.values, &tb.values)?;
        let value = Tensor::scalar(dot / (norm_a * norm_b));
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(
            Op::Cosine {
                a,
                b,
                dot,
                norm_a,
                norm_b,
            },
            value,
            rg,
        ))
    }

    /// `-ln softmax(logits)[target]`, computed with max subtraction.
    pub fn softmax_nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.shape.len() != 1 || t.len() < 2 {
            return Err(Error::Contract(format!(
                "softmax_nll needs at least two logits, got shape {:?}",
                t.shape
            )));
        }
        if target >= t.len() {
            return Err(Error::Index {
                index: target,
                len: t.len(),
            });
        }
        if let Some((index, &value)) = t.values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { index, value });
        }
        let max = t.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = t.values.iter().map(|&x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = z.ln() - (t.values[target] - max);
        let probs = exps.iter().map(|e| e / z).collect();
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Op::SoftmaxNll {
                logits,
                target,
                probs,
            },
            Tensor::scalar(loss),
            rg,
        ))
    }

    /// Sign pattern of every ReLU input on the tape (`true` where positive).
    ///
    /// Finite-difference checks compare this pattern across perturbations to
    /// detect when a probe straddles a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.nodes[a.0].value.values.iter().map(|&x| x > 0.0))
            .collect()
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_value = self.value(root);
        if !root_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        grads.resize(self.nodes.len(), None);
        for (idx, slot) in grads.iter_mut().enumerate() {
            if !self.nodes[idx].requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape.clone()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], var: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[var.0].requires_grad {
            return;
        }
        let slot = grads[var.0].get_or_insert_with(|| vec![0.0; self.nodes[var.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (k, n) = (tb.shape[0], tb.shape[1]);
                let m = if ta.shape.len() == 1 { 1 } else { ta.shape[0] };
                self.accumulate(grads, *a, |ga| gemm_nt(g, &tb.values, ga, m, n, k));
                self.accumulate(grads, *b, |gb| gemm_tn(&ta.values, g, gb, m, k, n));
            }
            Op::Add { a, b, broadcast } => {
                self.accumulate(grads, *a, |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                let cols = self.value(*b).len();
                self.accumulate(grads, *b, |gb| {
                    if *broadcast {
                        for (i, &y) in g.iter().enumerate() {
                            gb[i % cols] += y;
                        }
                    } else {
                        for (x, &y) in gb.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Mul { a, b, broadcast } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let cols = tb.len();
                self.accumulate(grads, *a, |ga| {
                    for (i, (x, &y)) in ga.iter_mut().zip(g).enumerate() {
                        let bv = if *broadcast { tb.values[i % cols] } else { tb.values[i] };
                        *x += y * bv;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for (i, &y) in g.iter().enumerate() {
                        let j = if *broadcast { i % cols } else { i };
                        gb[j] += y * ta.values[i];
                    }
                });
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                self.accumulate(grads, *a, |ga| {
                    for ((x, &y), &inp) in ga.iter_mut().zip(g).zip(&ta.values) {
                        if inp > 0.0 {
                            *x += y;
                        }
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(grads, *a, |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x += y * factor;
                    }
                });
            }
            Op::Sum(a) => {
                let seed = g[0];
                self.accumulate(grads, *a, |ga| {
                    for x in ga.iter_mut() {
                        *x += seed;
                    }
                });
            }
            Op::SumRows { a, rows } => {
                let cols = self.value(*a).cols();
                self.accumulate(grads, *a, |ga| {
                    for &r in rows {
                        for (x, &y) in ga[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                });
            }
            Op::Row { a, row } => {
                let cols = self.value(*a).cols();
                self.accumulate(grads, *a, |ga| {
                    for (x, &y) in ga[row * cols..(row + 1) * cols].iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::Stack(parts) => {
                for (i, &p) in parts.iter().enumerate() {
                    self.accumulate(grads, p, |gp| gp[0] += g[i]);
                }
            }
            Op::Cosine {
                a,
                b,
                dot,
                norm_a,
                norm_b,
            } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let seed = g[0];
                let inv = 1.0 / (norm_a * norm_b);
                let ca = dot / (norm_a * norm_a);
                let cb = dot / (norm_b * norm_b);
                // d/da = b/(|a||b|) - dot·a/(|a|³|b|)
                self.accumulate(grads, *a, |ga| {
                    for ((x, &av), &bv) in ga.iter_mut().zip(&ta.values).zip(&tb.values) {
                        *x += seed * inv * (bv - ca * av);
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((x, &av), &bv) in gb.iter_mut().zip(&ta.values).zip(&tb.values) {
                        *x += seed * inv * (av - cb * bv);
                    }
                });
            }
            Op::SoftmaxNll {
                logits,
                target,
                probs,
            } => {
                let seed = g[0];
                self.accumulate(grads, *logits, |gl| {
                    for (i, (x, &p)) in gl.iter_mut().zip(probs).enumerate() {
                        let onehot = if i == *target { 1.0 } else { 0.0 };
                        *x += seed * (p - onehot);
                    }
                });
            }
        }
    }
}
