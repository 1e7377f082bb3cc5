//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every primitive pushes one node onto the [`Tape`]; the node keeps its
//! forward value and enough structure to replay or differentiate it.
//! [`Tape::backward`] walks the nodes in reverse, accumulating
//! vector-Jacobian products into per-node gradient slots that are only
//! allocated when something flows into them.
//!
//! Comparisons (indicator masks) are recorded as constants, so their
//! derivative is zero almost everywhere and the surrounding product
//! rule yields the usual subgradient.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tensor::{matmul_into, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// Edge handling for grid convolutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Zero,
    Periodic,
}

/// Comparison used by [`Tape::indicator`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Gt,
    Lt,
}

/// User-defined primitive with a hand-written vector-Jacobian product.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    /// Gradient contribution for each input, in order.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Clone)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Offset(usize, f64),
    MatMul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Abs(usize),
    Softplus(usize),
    Sum(usize),
    Mean(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize, usize),
    SoftmaxRows(usize),
    CumsumRows(usize),
    Gather { src: usize, index: Arc<[usize]>, dims: Vec<usize> },
    BlockMatMul { src: usize, left: Arc<Tensor> },
    Custom { op: Arc<dyn CustomOp>, inputs: Vec<usize> },
}

const NO_SOURCE: usize = usize::MAX;

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddBias(..) => "add_bias",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Abs(_) => "abs",
            Op::Softplus(_) => "softplus",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::ConcatCols(_) => "concat",
            Op::SliceCols(..) => "slice",
            Op::SoftmaxRows(_) => "softmax",
            Op::CumsumRows(_) => "cumsum",
            Op::Gather { .. } => "gather",
            Op::BlockMatMul { .. } => "block_matmul",
            Op::Custom { op, .. } => op.name(),
        }
    }

    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddBias(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Abs(a)
            | Op::Softplus(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SliceCols(a, _, _)
            | Op::SoftmaxRows(a)
            | Op::CumsumRows(a) => vec![*a],
            Op::ConcatCols(v) => v.clone(),
            Op::Gather { src, .. } | Op::BlockMatMul { src, .. } => vec![*src],
            Op::Custom { inputs, .. } => inputs.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recording of a forward program.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("id", &self.id).field("nodes", &self.nodes.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded primitives that depend on at least one input.
    pub fn dependency_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !matches!(n.op, Op::Leaf | Op::Constant) && n.requires_grad)
            .count()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        debug_assert_eq!(v.tape, self.id);
        &self.nodes[v.index].value
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = eval(&op, &self.nodes)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let requires_grad = op.parents().iter().any(|&p| self.nodes[p].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Add(self.check(a)?, self.check(b)?);
        self.push(op)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Sub(self.check(a)?, self.check(b)?);
        self.push(op)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Mul(self.check(a)?, self.check(b)?);
        self.push(op)
    }

    /// `a[r, c] + bias[c]` broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let op = Op::AddBias(self.check(a)?, self.check(bias)?);
        self.push(op)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let op = Op::Scale(self.check(a)?, s);
        self.push(op)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        let op = Op::Offset(self.check(a)?, c);
        self.push(op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::MatMul(self.check(a)?, self.check(b)?);
        self.push(op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sigmoid(self.check(a)?);
        self.push(op)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let op = Op::Tanh(self.check(a)?);
        self.push(op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let op = Op::Relu(self.check(a)?);
        self.push(op)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let op = Op::Abs(self.check(a)?);
        self.push(op)
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let op = Op::Softplus(self.check(a)?);
        self.push(op)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sum(self.check(a)?);
        self.push(op)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let op = Op::Mean(self.check(a)?);
        self.push(op)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let idx = parts.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        self.push(Op::ConcatCols(idx))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let op = Op::SliceCols(self.check(a)?, start, end);
        self.push(op)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let op = Op::SoftmaxRows(self.check(a)?);
        self.push(op)
    }

    pub fn cumsum_rows(&mut self, a: Var) -> Result<Var> {
        let op = Op::CumsumRows(self.check(a)?);
        self.push(op)
    }

    /// Left-multiplies every consecutive block of `left.rows()` rows of `a`
    /// by the constant matrix `left`.
    pub fn block_matmul(&mut self, left: Arc<Tensor>, a: Var) -> Result<Var> {
        let op = Op::BlockMatMul { src: self.check(a)?, left };
        self.push(op)
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let inputs = inputs.iter().map(|&v| self.check(v)).collect::<Result<Vec<_>>>()?;
        self.push(Op::Custom { op, inputs })
    }

    /// Constant 0/1 mask of `a cmp b`; carries no gradient.
    pub fn indicator(&mut self, a: Var, cmp: Cmp, b: Var) -> Result<Var> {
        let (ia, ib) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if va.dims() != vb.dims() {
            return Err(Error::shape("indicator", format!("{:?} vs {:?}", va.dims(), vb.dims())));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| {
                let hit = match cmp {
                    Cmp::Gt => x > y,
                    Cmp::Lt => x < y,
                };
                if hit { 1.0 } else { 0.0 }
            })
            .collect();
        let t = Tensor::from_vec(va.dims().to_vec(), data)?;
        Ok(self.constant(t))
    }

    /// 2-D convolution of a batch of grid fields.
    ///
    /// `x` is `[batch * width * height, c_in]` with cells in row-major
    /// `(m, n)` order inside each batch block; `kernel` is
    /// `[k * k * c_in, c_out]` indexed by `(i, j, c_in)`. Computes
    /// `out[m, n] = sum_{i,j} K[i, j] x[m - i + r, n - j + r]` with `r = (k - 1) / 2`.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        width: usize,
        height: usize,
        ksize: usize,
        padding: Padding,
    ) -> Result<Var> {
        let ix = self.check(x)?;
        let xv = &self.nodes[ix].value;
        let cells = width * height;
        if ksize.is_multiple_of(2) || xv.dims().len() != 2 || cells == 0 || !xv.rows().is_multiple_of(cells) {
            return Err(Error::shape(
                "conv2d",
                format!("input {:?} on a {width}x{height} grid with kernel {ksize}", xv.dims()),
            ));
        }
        let c_in = xv.cols();
        let batch = xv.rows() / cells;
        let index = im2col_index(batch, width, height, c_in, ksize, padding);
        let cols = ksize * ksize * c_in;
        let patches = self.push(Op::Gather {
            src: ix,
            index: index.into(),
            dims: vec![batch * cells, cols],
        })?;
        self.matmul(patches, kernel)
    }

    /// Named entry point for the elementwise and reduction primitives.
    pub fn apply(&mut self, name: &str, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(format!("`{name}` takes {n} inputs, got {}", inputs.len())))
            }
        };
        match name {
            "add" | "sub" | "mul" | "matmul" | "add_bias" => {
                arity(2)?;
                let (a, b) = (inputs[0], inputs[1]);
                match name {
                    "add" => self.add(a, b),
                    "sub" => self.sub(a, b),
                    "mul" => self.mul(a, b),
                    "add_bias" => self.add_bias(a, b),
                    _ => self.matmul(a, b),
                }
            }
            "sigmoid" | "tanh" | "relu" | "abs" | "softplus" | "sum" | "mean" | "softmax"
            | "cumsum" => {
                arity(1)?;
                let a = inputs[0];
                match name {
                    "sigmoid" => self.sigmoid(a),
                    "tanh" => self.tanh(a),
                    "relu" => self.relu(a),
                    "abs" => self.abs(a),
                    "softplus" => self.softplus(a),
                    "sum" => self.sum(a),
                    "mean" => self.mean(a),
                    "softmax" => self.softmax_rows(a),
                    _ => self.cumsum_rows(a),
                }
            }
            "concat" => self.concat_cols(inputs),
            other => Err(Error::UnsupportedPrimitive(other.to_string())),
        }
    }

    /// Re-executes the recording, optionally swapping in new leaf values.
    pub fn replay(&self, overrides: &[(Var, Tensor)]) -> Result<Tape> {
        let mut out = Tape { id: self.id, nodes: Vec::with_capacity(self.nodes.len()) };
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match node.op {
                Op::Leaf | Op::Constant => {
                    match overrides.iter().find(|(v, _)| v.tape == self.id && v.index == i) {
                        Some((_, t)) if t.dims() == node.value.dims() => t.clone(),
                        Some((_, t)) => {
                            return Err(Error::shape(
                                "replay",
                                format!("override {:?} for leaf {:?}", t.dims(), node.value.dims()),
                            ))
                        }
                        None => node.value.clone(),
                    }
                }
                _ => {
                    let v = eval(&node.op, &out.nodes)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite(node.op.name()));
                    }
                    v
                }
            };
            out.nodes.push(Node { value, op: node.op.clone(), requires_grad: node.requires_grad });
        }
        Ok(out)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let li = self.check(loss)?;
        let lv = &self.nodes[li].value;
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.dims().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.nodes[li].requires_grad {
            grads[li] = Some(vec![1.0]);
        }
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        let dims = self.nodes.iter().map(|n| n.value.dims().to_vec()).collect();
        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, _)| Var { tape: self.id, index: i })
            .collect();
        Ok(Gradients { tape: self.id, grads, dims, leaves })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let name = node.op.name();
        let val = |i: usize| self.nodes[i].value.data();
        let wants = |i: usize| self.nodes[i].requires_grad;
        let mut acc = |i: usize, contrib: Vec<f64>| -> Result<()> {
            if !self.nodes[i].requires_grad {
                return Ok(());
            }
            if contrib.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name));
            }
            match &mut grads[i] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
            Ok(())
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                acc(*a, g.to_vec())?;
                acc(*b, g.to_vec())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec())?;
                acc(*b, g.iter().map(|v| -v).collect())?;
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect())?;
                }
                if wants(*b) {
                    acc(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect())?;
                }
            }
            Op::AddBias(a, b) => {
                acc(*a, g.to_vec())?;
                if wants(*b) {
                    let c = self.nodes[*b].value.numel();
                    let mut gb = vec![0.0; c];
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                    acc(*b, gb)?;
                }
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|v| v * s).collect())?,
            Op::Offset(a, _) => acc(*a, g.to_vec())?,
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if wants(*a) {
                    // g[m,n] * b^T[n,k]
                    let bt = bv.transpose();
                    let mut ga = vec![0.0; m * k];
                    matmul_into(g, bt.data(), &mut ga, m, n, k);
                    acc(*a, ga)?;
                }
                if wants(*b) {
                    let at = av.transpose();
                    let mut gb = vec![0.0; k * n];
                    matmul_into(at.data(), g, &mut gb, k, m, n);
                    acc(*b, gb)?;
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect())?;
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                acc(*a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect())?;
            }
            Op::Relu(a) => {
                acc(*a, g.iter().zip(val(*a)).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect())?;
            }
            Op::Abs(a) => {
                acc(
                    *a,
                    g.iter()
                        .zip(val(*a))
                        .map(|(g, x)| if *x > 0.0 { *g } else if *x < 0.0 { -g } else { 0.0 })
                        .collect(),
                )?;
            }
            Op::Softplus(a) => {
                acc(*a, g.iter().zip(val(*a)).map(|(g, x)| g * sigmoid(*x)).collect())?;
            }
            Op::Sum(a) => acc(*a, vec![g[0]; self.nodes[*a].value.numel()])?,
            Op::Mean(a) => {
                let n = self.nodes[*a].value.numel();
                acc(*a, vec![g[0] / n as f64; n])?;
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.nodes[p].value.cols();
                    if wants(p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + offset..r * total + offset + c]);
                        }
                        acc(p, gp)?;
                    }
                    offset += c;
                }
            }
            Op::SliceCols(a, start, end) => {
                let av = &self.nodes[*a].value;
                let (rows, cols, w) = (av.rows(), av.cols(), end - start);
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    ga[r * cols + start..r * cols + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                acc(*a, ga)?;
            }
            Op::SoftmaxRows(a) => {
                let y = node.value.data();
                let c = node.value.cols();
                let mut ga = vec![0.0; y.len()];
                for ((yr, gr), out) in y.chunks(c).zip(g.chunks(c)).zip(ga.chunks_mut(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((o, y), g) in out.iter_mut().zip(yr).zip(gr) {
                        *o = y * (g - dot);
                    }
                }
                acc(*a, ga)?;
            }
            Op::CumsumRows(a) => {
                let c = node.value.cols();
                let mut ga = vec![0.0; g.len()];
                for (gr, out) in g.chunks(c).zip(ga.chunks_mut(c)) {
                    let mut run = 0.0;
                    for j in (0..c).rev() {
                        run += gr[j];
                        out[j] = run;
                    }
                }
                acc(*a, ga)?;
            }
            Op::Gather { src, index, .. } => {
                let mut gs = vec![0.0; self.nodes[*src].value.numel()];
                for (&ix, &gv) in index.iter().zip(g) {
                    if ix != NO_SOURCE {
                        gs[ix] += gv;
                    }
                }
                acc(*src, gs)?;
            }
            Op::BlockMatMul { src, left } => {
                let lt = left.transpose();
                acc(*src, block_left_mul(&lt, g, node.value.cols()))?;
            }
            Op::Custom { op, inputs } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
                let gt = Tensor::from_vec(node.value.dims().to_vec(), g.to_vec())?;
                let parts = op.backward(&ins, &node.value, &gt);
                for (&i, part) in inputs.iter().zip(parts) {
                    acc(i, part.into_data())?;
                }
            }
        }
        Ok(())
    }
}

/// Output of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    dims: Vec<Vec<usize>>,
    leaves: Vec<Var>,
}

impl Gradients {
    /// Gradient with respect to `v`; exact zeros when nothing reached it.
    pub fn wrt(&self, v: Var) -> Tensor {
        assert_eq!(v.tape, self.tape, "variable from another tape");
        let dims = self.dims[v.index].clone();
        match &self.grads[v.index] {
            Some(g) => Tensor::from_vec(dims, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&dims),
        }
    }

    /// All differentiable leaves with their gradients.
    pub fn leaves(&self) -> impl Iterator<Item = (Var, Tensor)> + '_ {
        self.leaves.iter().map(|&v| (v, self.wrt(v)))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.dims().to_vec(), data).expect("same shape")
}

fn require_matrix(op: &'static str, t: &Tensor) -> Result<()> {
    if t.dims().len() != 2 {
        return Err(Error::shape(op, format!("expected a matrix, got {:?}", t.dims())));
    }
    Ok(())
}

fn block_left_mul(left: &Tensor, src: &[f64], cols: usize) -> Vec<f64> {
    let p = left.rows();
    let q = left.cols();
    let blocks = src.len() / (q * cols);
    let mut out = vec![0.0; blocks * p * cols];
    for b in 0..blocks {
        matmul_into(
            left.data(),
            &src[b * q * cols..(b + 1) * q * cols],
            &mut out[b * p * cols..(b + 1) * p * cols],
            p,
            q,
            cols,
        );
    }
    out
}

fn eval(op: &Op, nodes: &[Node]) -> Result<Tensor> {
    let v = |i: usize| &nodes[i].value;
    let name = op.name();
    match op {
        Op::Leaf | Op::Constant => unreachable!("leaves are not evaluated"),
        Op::Add(a, b) => {
            same_shape(name, v(*a), v(*b))?;
            Ok(zip_with(v(*a), v(*b), |x, y| x + y))
        }
        Op::Sub(a, b) => {
            same_shape(name, v(*a), v(*b))?;
            Ok(zip_with(v(*a), v(*b), |x, y| x - y))
        }
        Op::Mul(a, b) => {
            same_shape(name, v(*a), v(*b))?;
            Ok(zip_with(v(*a), v(*b), |x, y| x * y))
        }
        Op::AddBias(a, b) => {
            let (x, bias) = (v(*a), v(*b));
            if x.cols() != bias.numel() {
                return Err(Error::shape(name, format!("{:?} + bias {:?}", x.dims(), bias.dims())));
            }
            let c = bias.numel();
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(c) {
                row.iter_mut().zip(bias.data()).for_each(|(o, b)| *o += b);
            }
            Ok(out)
        }
        Op::Scale(a, s) => Ok(v(*a).map(|x| x * s)),
        Op::Offset(a, c) => Ok(v(*a).map(|x| x + c)),
        Op::MatMul(a, b) => v(*a).matmul(v(*b)),
        Op::Sigmoid(a) => Ok(v(*a).map(sigmoid)),
        Op::Tanh(a) => Ok(v(*a).map(f64::tanh)),
        Op::Relu(a) => Ok(v(*a).map(|x| x.max(0.0))),
        Op::Abs(a) => Ok(v(*a).map(f64::abs)),
        Op::Softplus(a) => Ok(v(*a).map(softplus)),
        Op::Sum(a) => Ok(Tensor::scalar(v(*a).data().iter().sum())),
        Op::Mean(a) => {
            let t = v(*a);
            Ok(Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64))
        }
        Op::ConcatCols(parts) => {
            let rows = v(parts[0]).rows();
            for &p in parts {
                require_matrix(name, v(p))?;
                if v(p).rows() != rows {
                    return Err(Error::shape(name, format!("row counts {} vs {}", rows, v(p).rows())));
                }
            }
            let total: usize = parts.iter().map(|&p| v(p).cols()).sum();
            let mut out = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for &p in parts {
                    let c = v(p).cols();
                    out.extend_from_slice(&v(p).data()[r * c..(r + 1) * c]);
                }
            }
            Tensor::from_vec(vec![rows, total], out)
        }
        Op::SliceCols(a, start, end) => {
            let t = v(*a);
            require_matrix(name, t)?;
            if start >= end || *end > t.cols() {
                return Err(Error::shape(name, format!("columns {start}..{end} of {:?}", t.dims())));
            }
            let (rows, cols) = (t.rows(), t.cols());
            let mut out = Vec::with_capacity(rows * (end - start));
            for r in 0..rows {
                out.extend_from_slice(&t.data()[r * cols + start..r * cols + end]);
            }
            Tensor::from_vec(vec![rows, end - start], out)
        }
        Op::SoftmaxRows(a) => {
            let t = v(*a);
            let c = t.cols();
            let mut out = t.clone();
            for row in out.data_mut().chunks_mut(c) {
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    z += *x;
                }
                row.iter_mut().for_each(|x| *x /= z);
            }
            Ok(out)
        }
        Op::CumsumRows(a) => {
            let t = v(*a);
            let c = t.cols();
            let mut out = t.clone();
            for row in out.data_mut().chunks_mut(c) {
                for j in 1..c {
                    row[j] += row[j - 1];
                }
            }
            Ok(out)
        }
        Op::Gather { src, index, dims } => {
            let s = v(*src).data();
            let data = index.iter().map(|&i| if i == NO_SOURCE { 0.0 } else { s[i] }).collect();
            Tensor::from_vec(dims.clone(), data)
        }
        Op::BlockMatMul { src, left } => {
            let t = v(*src);
            require_matrix(name, t)?;
            if left.dims().len() != 2 || left.rows() != left.cols() || t.rows() % left.cols() != 0 {
                return Err(Error::shape(name, format!("{:?} applied to {:?}", left.dims(), t.dims())));
            }
            let out = block_left_mul(left, t.data(), t.cols());
            Tensor::from_vec(t.dims().to_vec(), out)
        }
        Op::Custom { op, inputs } => {
            let ins: Vec<&Tensor> = inputs.iter().map(|&i| v(i)).collect();
            op.forward(&ins)
        }
    }
}

fn im2col_index(
    batch: usize,
    width: usize,
    height: usize,
    c_in: usize,
    ksize: usize,
    padding: Padding,
) -> Vec<usize> {
    let r = (ksize / 2) as isize;
    let cols = ksize * ksize * c_in;
    let cells = width * height;
    let mut index = Vec::with_capacity(batch * cells * cols);
    for b in 0..batch {
        for m in 0..width as isize {
            for n in 0..height as isize {
                for i in 0..ksize as isize {
                    for j in 0..ksize as isize {
                        let (mut sm, mut sn) = (m - (i - r), n - (j - r));
                        let inside = match padding {
                            Padding::Zero => {
                                sm >= 0 && sn >= 0 && sm < width as isize && sn < height as isize
                            }
                            Padding::Periodic => {
                                sm = sm.rem_euclid(width as isize);
                                sn = sn.rem_euclid(height as isize);
                                true
                            }
                        };
                        for c in 0..c_in {
                            if inside {
                                let cell = sm as usize * height + sn as usize;
                                index.push((b * cells + cell) * c_in + c);
                            } else {
                                index.push(NO_SOURCE);
                            }
                        }
                    }
                }
            }
        }
    }
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn constant_program_has_no_dependencies() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let d = tape.scale(c, 3.0).unwrap();
        assert_eq!(tape.scalar(d), 6.0);
        assert_eq!(tape.dependency_count(), 0);
    }

    #[test]
    fn square_replays_to_nine() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let again = tape.replay(&[]).unwrap();
        assert_eq!(again.scalar(y), 9.0);
        let moved = tape.replay(&[(x, Tensor::scalar(4.0))]).unwrap();
        assert_eq!(moved.scalar(y), 16.0);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(2, 3, &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0; 6]);
    }

    #[test]
    fn half_squared_norm_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let loss = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0, 2.0]);
    }

    #[test]
    fn untouched_leaf_gets_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(t(2, 2, &[1.0; 4]));
        let y = tape.scale(x, 2.0).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(unused).data(), &[0.0; 4]);
        assert_eq!(g.leaves().count(), 2);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(1, 2, &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn unknown_primitive_is_named() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        match tape.apply("erf", &[x]) {
            Err(Error::UnsupportedPrimitive(name)) => assert_eq!(name, "erf"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn foreign_var_is_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let x = a.leaf(Tensor::scalar(1.0));
        assert!(matches!(b.tanh(x), Err(Error::ForeignVar)));
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(f64::MAX));
        assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite("scale"))));
    }

    #[test]
    fn non_finite_gradient_names_primitive() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1e-300));
        let y = tape.scale(x, 1e200).unwrap();
        let z = tape.scale(y, 1e200).unwrap();
        assert!(tape.scalar(z).is_finite());
        match tape.backward(z) {
            Err(Error::NonFiniteGradient(name)) => assert_eq!(name, "scale"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indicator_is_constant() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(1, 3, &[1.0, 2.0, 3.0]));
        let b = tape.leaf(t(1, 3, &[2.0, 2.0, 2.0]));
        let m = tape.indicator(a, Cmp::Gt, b).unwrap();
        assert_eq!(tape.value(m).data(), &[0.0, 0.0, 1.0]);
        let prod = tape.mul(m, a).unwrap();
        let s = tape.sum(prod).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(a).data(), &[0.0, 0.0, 1.0]);
        assert_eq!(g.wrt(b).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_identity_kernel_copies_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(9, 1, &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let kern = tape.leaf(t(9, 1, &k));
        let y = tape.conv2d(x, kern, 3, 3, 3, Padding::Zero).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv_shift_kernel_matches_flipped_definition() {
        // K[i=0, j=1] (offset -1 in m) picks x[m + 1, n]
        let mut tape = Tape::new();
        let x = tape.leaf(t(4, 1, &[1., 2., 3., 4.]));
        let mut k = vec![0.0; 9];
        k[1] = 1.0;
        let kern = tape.leaf(t(9, 1, &k));
        let y = tape.conv2d(x, kern, 2, 2, 3, Padding::Zero).unwrap();
        assert_eq!(tape.value(y).data(), &[3., 4., 0., 0.]);
    }

    #[test]
    fn block_matmul_applies_per_block() {
        let mut tape = Tape::new();
        let swap = Arc::new(t(2, 2, &[0., 1., 1., 0.]));
        let x = tape.leaf(t(4, 1, &[1., 2., 3., 4.]));
        let y = tape.block_matmul(swap, x).unwrap();
        assert_eq!(tape.value(y).data(), &[2., 1., 4., 3.]);
    }
}
