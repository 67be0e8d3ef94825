//! Reverse-mode automatic differentiation over small dense `f64` tensors.
//!
//! A [`Graph`] owns two kinds of nodes: parameters, which live at the front of
//! the node list and survive [`Graph::reset`], and a dynamic tape of
//! operations recorded during the forward pass. Every operation records its
//! inputs by id, so inputs always precede outputs and the backward pass is a
//! single reverse sweep.
//!
//! Parameter gradients accumulate across calls to [`Graph::backward`]; the
//! caller zeroes them with [`Graph::zero_grad`] between optimizer steps.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("parameters must be registered before any operation is recorded")]
    ParamAfterOps,
    #[error("unknown parameter {0}")]
    UnknownParam(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Dense row-major array. Rank 0 is a scalar.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::BadShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![v; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows when viewed as a matrix; rank-1 tensors are a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Handle to a trainable parameter. Parameters are also graph nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn var(self) -> Var {
        Var(self.0)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Bcast {
    Same,
    Row,
    Scalar,
}

#[derive(Clone, Debug)]
enum Op {
    Param,
    Leaf,
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    Sum(Var),
    Sse {
        pred: Var,
        target: Vec<f64>,
        row_weights: Option<Vec<f64>>,
    },
    WeightedSum(Var, Vec<f64>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Param => "param",
            Op::Leaf => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::Sum(..) => "sum",
            Op::Sse { .. } => "sum_squared_error",
            Op::WeightedSum(..) => "weighted_sum",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation graph with persistent parameters and a resettable tape.
pub struct Graph {
    nodes: Vec<Node>,
    names: Vec<String>,
    param_grads: Vec<Vec<f64>>,
    node_grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            names: Vec::new(),
            param_grads: Vec::new(),
            node_grads: Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Registers a trainable parameter. Must happen before any operation is
    /// recorded (or right after a [`reset`](Self::reset)).
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        if self.nodes.len() != self.names.len() {
            return Err(AutodiffError::ParamAfterOps);
        }
        let id = self.nodes.len();
        self.param_grads.push(vec![0.0; value.len()]);
        self.names.push(name.into());
        self.nodes.push(Node {
            value,
            op: Op::Param,
            requires_grad: true,
        });
        Ok(ParamId(id))
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn param_name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find_param(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn param_value(&self, id: ParamId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Mutable access to a parameter's values. Only valid between forward
    /// passes; call [`reset`](Self::reset) before recomputing.
    pub fn param_value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.nodes[id.0].value
    }

    pub fn param_grad(&self, id: ParamId) -> &[f64] {
        &self.param_grads[id.0]
    }

    pub fn param_grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.param_grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.param_grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Snapshot of every parameter as `(name, value)`, in registration order.
    pub fn params_snapshot(&self) -> Vec<(String, Tensor)> {
        self.names
            .iter()
            .zip(&self.nodes)
            .map(|(n, node)| (n.clone(), node.value.clone()))
            .collect()
    }

    /// Overwrites parameter values by name. Every snapshot entry must match
    /// an existing parameter of the same shape.
    pub fn load_params(&mut self, snapshot: &[(String, Tensor)]) -> Result<()> {
        for (name, value) in snapshot {
            let id = self
                .find_param(name)
                .ok_or_else(|| AutodiffError::UnknownParam(name.clone()))?;
            let cur = &mut self.nodes[id.0].value;
            if cur.shape != value.shape {
                return Err(AutodiffError::ShapeMismatch {
                    op: "load_params",
                    left: cur.shape.clone(),
                    right: value.shape.clone(),
                });
            }
            *cur = value.clone();
        }
        Ok(())
    }

    /// Drops every non-parameter node. Parameter values and accumulated
    /// gradients persist.
    pub fn reset(&mut self) {
        self.nodes.truncate(self.names.len());
        self.node_grads.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the most recent backward root with respect to `v`.
    /// Unreachable or constant nodes report `None`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node_grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Same value as `v` with gradient flow cut.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op.name() });
        }
        let requires_grad = match &op {
            Op::Param => true,
            Op::Leaf => false,
            Op::Add(a, b, _) | Op::Sub(a, b, _) | Op::Mul(a, b, _) | Op::MatMul(a, b) => {
                self.requires_grad(*a) || self.requires_grad(*b)
            }
            Op::ConcatCols(a, b) => self.requires_grad(*a) || self.requires_grad(*b),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::SliceCols(a, _)
            | Op::Sum(a)
            | Op::WeightedSum(a, _) => self.requires_grad(*a),
            Op::Sse { pred, .. } => self.requires_grad(*pred),
        };
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape == tb.shape {
            return Ok(Bcast::Same);
        }
        if tb.len() == 1 && tb.shape.len() <= 1 {
            return Ok(Bcast::Scalar);
        }
        let row_like = tb.shape.len() == 1 || (tb.shape.len() == 2 && tb.shape[0] == 1);
        if ta.shape.len() == 2 && row_like && tb.len() == ta.shape[1] {
            return Ok(Bcast::Row);
        }
        Err(AutodiffError::ShapeMismatch {
            op,
            left: ta.shape.clone(),
            right: tb.shape.clone(),
        })
    }

    fn zip_bcast(&self, a: Var, b: Var, mode: Bcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = match mode {
            Bcast::Same => ta
                .data
                .iter()
                .zip(&tb.data)
                .map(|(&x, &y)| f(x, y))
                .collect(),
            Bcast::Scalar => {
                let y = tb.data[0];
                ta.data.iter().map(|&x| f(x, y)).collect()
            }
            Bcast::Row => {
                let n = tb.len();
                ta.data
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, tb.data[i % n]))
                    .collect()
            }
        };
        Tensor {
            shape: ta.shape.clone(),
            data,
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = self.bcast("add", a, b)?;
        let out = self.zip_bcast(a, b, mode, |x, y| x + y);
        self.push(out, Op::Add(a, b, mode))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = self.bcast("sub", a, b)?;
        let out = self.zip_bcast(a, b, mode, |x, y| x - y);
        self.push(out, Op::Sub(a, b, mode))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let mode = self.bcast("mul", a, b)?;
        let out = self.zip_bcast(a, b, mode, |x, y| x * y);
        self.push(out, Op::Mul(a, b, mode))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x * c).collect(),
        };
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|x| x + c).collect(),
        };
        self.push(out, Op::AddScalar(a))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let data = matmul_raw(&ta.data, &tb.data, m, k, n);
        let out = Tensor {
            shape: vec![m, n],
            data,
        };
        self.push(out, Op::MatMul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().map(|&x| f(x)).collect(),
        };
        self.push(out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// Horizontal concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[0] != tb.shape[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_cols",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (rows, ca, cb) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&ta.data[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&tb.data[r * cb..(r + 1) * cb]);
        }
        let out = Tensor {
            shape: vec![rows, ca + cb],
            data,
        };
        self.push(out, Op::ConcatCols(a, b))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.shape.len() != 2 || start + len > ta.shape[1] {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice_cols",
                left: ta.shape.clone(),
                right: vec![start, len],
            });
        }
        let (rows, cols) = (ta.shape[0], ta.shape[1]);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&ta.data[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor {
            shape: vec![rows, len],
            data,
        };
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// `Σ w ⊙ a` against a constant weight array of the same length.
    pub fn weighted_sum(&mut self, a: Var, weights: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if ta.len() != weights.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "weighted_sum",
                left: ta.shape.clone(),
                right: vec![weights.len()],
            });
        }
        let s = ta.data.iter().zip(&weights).map(|(x, w)| x * w).sum();
        self.push(Tensor::scalar(s), Op::WeightedSum(a, weights))
    }

    /// `Σ (pred - target)²` with the target held constant.
    pub fn sum_squared_error(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        self.sse_impl(pred, target, None)
    }

    /// Row-weighted squared error: `Σ_r w_r Σ_c (pred_rc - target_rc)²`.
    /// Used to mask padded rows of a ragged batch.
    pub fn weighted_sse(&mut self, pred: Var, target: &Tensor, row_weights: &[f64]) -> Result<Var> {
        let rows = self.value(pred).rows();
        if row_weights.len() != rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "weighted_sse",
                left: self.value(pred).shape.clone(),
                right: vec![row_weights.len()],
            });
        }
        self.sse_impl(pred, target, Some(row_weights.to_vec()))
    }

    fn sse_impl(
        &mut self,
        pred: Var,
        target: &Tensor,
        row_weights: Option<Vec<f64>>,
    ) -> Result<Var> {
        let tp = self.value(pred);
        if tp.shape != target.shape {
            return Err(AutodiffError::ShapeMismatch {
                op: "sum_squared_error",
                left: tp.shape.clone(),
                right: target.shape.clone(),
            });
        }
        let cols = tp.cols();
        let s: f64 = tp
            .data
            .iter()
            .zip(&target.data)
            .enumerate()
            .map(|(i, (p, t))| {
                let w = row_weights.as_ref().map_or(1.0, |w| w[i / cols]);
                w * (p - t) * (p - t)
            })
            .sum();
        self.push(
            Tensor::scalar(s),
            Op::Sse {
                pred,
                target: target.data.clone(),
                row_weights,
            },
        )
    }

    /// Reverse sweep from a scalar `root`. Parameter gradients are *added* to
    /// the persistent buffers; intermediate gradients are recomputed per call
    /// and exposed through [`grad`](Self::grad).
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_val = self.value(root);
        if root_val.len() != 1 || root_val.shape.len() > 1 {
            return Err(AutodiffError::NonScalarRoot(root_val.shape.clone()));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                grads[id] = Some(g);
                continue;
            }
            match &node.op {
                Op::Param | Op::Leaf => {}
                Op::Add(a, b, mode) => {
                    accumulate(&mut grads, &self.nodes, *a, &g);
                    let gb = reduce_bcast(&g, *mode, self.value(*b).len());
                    accumulate(&mut grads, &self.nodes, *b, &gb);
                }
                Op::Sub(a, b, mode) => {
                    accumulate(&mut grads, &self.nodes, *a, &g);
                    let gb: Vec<f64> = reduce_bcast(&g, *mode, self.value(*b).len())
                        .into_iter()
                        .map(|v| -v)
                        .collect();
                    accumulate(&mut grads, &self.nodes, *b, &gb);
                }
                Op::Mul(a, b, mode) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.requires_grad(*a) {
                        let nb = tb.len();
                        let ga: Vec<f64> = g
                            .iter()
                            .enumerate()
                            .map(|(i, gi)| {
                                let bv = match mode {
                                    Bcast::Same => tb.data[i],
                                    Bcast::Scalar => tb.data[0],
                                    Bcast::Row => tb.data[i % nb],
                                };
                                gi * bv
                            })
                            .collect();
                        accumulate(&mut grads, &self.nodes, *a, &ga);
                    }
                    if self.requires_grad(*b) {
                        let prod: Vec<f64> =
                            g.iter().zip(&ta.data).map(|(gi, av)| gi * av).collect();
                        let gb = reduce_bcast(&prod, *mode, tb.len());
                        accumulate(&mut grads, &self.nodes, *b, &gb);
                    }
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|v| v * c).collect();
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::AddScalar(a) => accumulate(&mut grads, &self.nodes, *a, &g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, nn) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                    if self.requires_grad(*a) {
                        // dA = G · Bᵀ
                        let mut ga = vec![0.0; m * k];
                        for i in 0..m {
                            for j in 0..nn {
                                let gij = g[i * nn + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for p in 0..k {
                                    ga[i * k + p] += gij * tb.data[p * nn + j];
                                }
                            }
                        }
                        accumulate(&mut grads, &self.nodes, *a, &ga);
                    }
                    if self.requires_grad(*b) {
                        // dB = Aᵀ · G
                        let mut gb = vec![0.0; k * nn];
                        for i in 0..m {
                            for p in 0..k {
                                let aip = ta.data[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                let row = &g[i * nn..(i + 1) * nn];
                                let out = &mut gb[p * nn..(p + 1) * nn];
                                for (o, gv) in out.iter_mut().zip(row) {
                                    *o += aip * gv;
                                }
                            }
                        }
                        accumulate(&mut grads, &self.nodes, *b, &gb);
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value.data;
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * (1.0 - yi * yi))
                        .collect();
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value.data;
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * yi * (1.0 - yi))
                        .collect();
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::Exp(a) => {
                    let y = &node.value.data;
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gi, yi)| gi * yi).collect();
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                    let rows = self.value(*a).rows();
                    let mut ga = Vec::with_capacity(rows * ca);
                    let mut gb = Vec::with_capacity(rows * cb);
                    for r in 0..rows {
                        let base = r * (ca + cb);
                        ga.extend_from_slice(&g[base..base + ca]);
                        gb.extend_from_slice(&g[base + ca..base + ca + cb]);
                    }
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                    accumulate(&mut grads, &self.nodes, *b, &gb);
                }
                Op::SliceCols(a, start) => {
                    let ta = self.value(*a);
                    let (rows, cols) = (ta.rows(), ta.cols());
                    let len = node.value.cols();
                    let mut ga = vec![0.0; rows * cols];
                    for r in 0..rows {
                        ga[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&g[r * len..(r + 1) * len]);
                    }
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::WeightedSum(a, w) => {
                    let ga: Vec<f64> = w.iter().map(|wi| wi * g[0]).collect();
                    accumulate(&mut grads, &self.nodes, *a, &ga);
                }
                Op::Sse {
                    pred,
                    target,
                    row_weights,
                } => {
                    let tp = self.value(*pred);
                    let cols = tp.cols();
                    let ga: Vec<f64> = tp
                        .data
                        .iter()
                        .zip(target)
                        .enumerate()
                        .map(|(i, (p, t))| {
                            let w = row_weights.as_ref().map_or(1.0, |w| w[i / cols]);
                            2.0 * w * (p - t) * g[0]
                        })
                        .collect();
                    accumulate(&mut grads, &self.nodes, *pred, &ga);
                }
            }
            grads[id] = Some(g);
        }

        for (i, pg) in self.param_grads.iter_mut().enumerate() {
            if let Some(Some(g)) = grads.get(i) {
                for (acc, v) in pg.iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        self.node_grads = grads;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], nodes: &[Node], target: Var, g: &[f64]) {
    if !nodes[target.0].requires_grad {
        return;
    }
    match &mut grads[target.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, v)| *a += v),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

fn reduce_bcast(g: &[f64], mode: Bcast, len: usize) -> Vec<f64> {
    match mode {
        Bcast::Same => g.to_vec(),
        Bcast::Scalar => vec![g.iter().sum()],
        Bcast::Row => {
            let mut out = vec![0.0; len];
            for (i, v) in g.iter().enumerate() {
                out[i % len] += v;
            }
            out
        }
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aip * bv;
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
