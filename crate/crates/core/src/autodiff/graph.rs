//! Tape-style reverse-mode differentiation over dense row-major matrices.
//!
//! Every value is a 2-D `[rows, cols]` matrix; vectors are `[1, n]` and
//! scalars `[1, 1]`. Nodes are appended in creation order and only ever
//! reference earlier nodes, so a reverse sweep over the arena is a valid
//! reverse topological order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking logs in the loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Uniform draws for Gumbel noise are clamped to `[GUMBEL_CLAMP, 1 - GUMBEL_CLAMP]`.
pub const GUMBEL_CLAMP: f64 = 1e-12;

/// Reference to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tag naming each primitive; used in error messages and for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Leaf,
    Param,
    Embed,
    StopGradient,
    MatMul,
    Transpose,
    Add,
    Sub,
    AddRow,
    Mul,
    MulRow,
    MulCol,
    Scale,
    ConcatCols,
    ConcatRows,
    SliceCols,
    GatherRows,
    Sigmoid,
    Relu,
    Softmax,
    Sum,
    Mean,
    SumRows,
    RowDot,
    LayerNorm,
    BlockMatMul,
    BlockMatMulNt,
    RepeatRows,
    TileRows,
    Reshape,
    BinaryCrossEntropy,
}

impl Primitive {
    pub const ALL: [Primitive; 31] = [
        Primitive::Leaf,
        Primitive::Param,
        Primitive::Embed,
        Primitive::StopGradient,
        Primitive::MatMul,
        Primitive::Transpose,
        Primitive::Add,
        Primitive::Sub,
        Primitive::AddRow,
        Primitive::Mul,
        Primitive::MulRow,
        Primitive::MulCol,
        Primitive::Scale,
        Primitive::ConcatCols,
        Primitive::ConcatRows,
        Primitive::SliceCols,
        Primitive::GatherRows,
        Primitive::Sigmoid,
        Primitive::Relu,
        Primitive::Softmax,
        Primitive::Sum,
        Primitive::Mean,
        Primitive::SumRows,
        Primitive::RowDot,
        Primitive::LayerNorm,
        Primitive::BlockMatMul,
        Primitive::BlockMatMulNt,
        Primitive::RepeatRows,
        Primitive::TileRows,
        Primitive::Reshape,
        Primitive::BinaryCrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::Leaf => "leaf",
            Primitive::Param => "param",
            Primitive::Embed => "embed",
            Primitive::StopGradient => "stop_gradient",
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::AddRow => "add_row",
            Primitive::Mul => "mul",
            Primitive::MulRow => "mul_row",
            Primitive::MulCol => "mul_col",
            Primitive::Scale => "scale",
            Primitive::ConcatCols => "concat_cols",
            Primitive::ConcatRows => "concat_rows",
            Primitive::SliceCols => "slice_cols",
            Primitive::GatherRows => "gather_rows",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Softmax => "softmax",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::SumRows => "sum_rows",
            Primitive::RowDot => "row_dot",
            Primitive::LayerNorm => "layer_norm",
            Primitive::BlockMatMul => "block_matmul",
            Primitive::BlockMatMulNt => "block_matmul_nt",
            Primitive::RepeatRows => "repeat_rows",
            Primitive::TileRows => "tile_rows",
            Primitive::Reshape => "reshape",
            Primitive::BinaryCrossEntropy => "binary_cross_entropy",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown primitive `{s}`")))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Embed {
        table: ParamId,
        ids: Vec<usize>,
    },
    StopGradient,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        ids: Vec<usize>,
    },
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    RowDot(Var, Var),
    /// `inv_std` holds one reciprocal standard deviation per row.
    LayerNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    BlockMatMul {
        a: Var,
        b: Var,
        blocks: usize,
    },
    BlockMatMulNt {
        a: Var,
        b: Var,
        blocks: usize,
    },
    RepeatRows {
        x: Var,
        times: usize,
    },
    TileRows {
        x: Var,
        times: usize,
    },
    Reshape(Var),
    BinaryCrossEntropy {
        pred: Var,
        labels: Vec<f64>,
    },
}

impl Op {
    fn primitive(&self) -> Primitive {
        match self {
            Op::Leaf => Primitive::Leaf,
            Op::Param(_) => Primitive::Param,
            Op::Embed { .. } => Primitive::Embed,
            Op::StopGradient => Primitive::StopGradient,
            Op::MatMul(..) => Primitive::MatMul,
            Op::Transpose(_) => Primitive::Transpose,
            Op::Add(..) => Primitive::Add,
            Op::Sub(..) => Primitive::Sub,
            Op::AddRow(..) => Primitive::AddRow,
            Op::Mul(..) => Primitive::Mul,
            Op::MulRow(..) => Primitive::MulRow,
            Op::MulCol(..) => Primitive::MulCol,
            Op::Scale(..) => Primitive::Scale,
            Op::ConcatCols(_) => Primitive::ConcatCols,
            Op::ConcatRows(_) => Primitive::ConcatRows,
            Op::SliceCols { .. } => Primitive::SliceCols,
            Op::GatherRows { .. } => Primitive::GatherRows,
            Op::Sigmoid(_) => Primitive::Sigmoid,
            Op::Relu(_) => Primitive::Relu,
            Op::Softmax(_) => Primitive::Softmax,
            Op::Sum(_) => Primitive::Sum,
            Op::Mean(_) => Primitive::Mean,
            Op::SumRows(_) => Primitive::SumRows,
            Op::RowDot(..) => Primitive::RowDot,
            Op::LayerNorm { .. } => Primitive::LayerNorm,
            Op::BlockMatMul { .. } => Primitive::BlockMatMul,
            Op::BlockMatMulNt { .. } => Primitive::BlockMatMulNt,
            Op::RepeatRows { .. } => Primitive::RepeatRows,
            Op::TileRows { .. } => Primitive::TileRows,
            Op::Reshape(_) => Primitive::Reshape,
            Op::BinaryCrossEntropy { .. } => Primitive::BinaryCrossEntropy,
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Param(_) | Op::Embed { .. } | Op::StopGradient => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::AddRow(a, b)
            | Op::Mul(a, b)
            | Op::MulRow(a, b)
            | Op::MulCol(a, b)
            | Op::RowDot(a, b)
            | Op::BlockMatMul { a, b, .. }
            | Op::BlockMatMulNt { a, b, .. } => vec![*a, *b],
            Op::ConcatCols(xs) | Op::ConcatRows(xs) => xs.clone(),
            Op::Transpose(x)
            | Op::Scale(x, _)
            | Op::SliceCols { x, .. }
            | Op::GatherRows { x, .. }
            | Op::Sigmoid(x)
            | Op::Relu(x)
            | Op::Softmax(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumRows(x)
            | Op::LayerNorm { x, .. }
            | Op::RepeatRows { x, .. }
            | Op::TileRows { x, .. }
            | Op::Reshape(x)
            | Op::BinaryCrossEntropy { pred: x, .. } => vec![*x],
        }
    }
}

/// One value in the graph: data, gradient and the recipe that produced it.
#[derive(Clone, Debug)]
pub struct Node {
    shape: [usize; 2],
    data: Vec<f64>,
    grad: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

impl Node {
    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Gradient buffer; empty for nodes that do not require gradients.
    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn primitive(&self) -> Primitive {
        self.op.primitive()
    }

    pub fn parents(&self) -> Vec<Var> {
        self.op.parents()
    }
}

/// Append-only arena of nodes plus the pseudorandom state used for Gumbel noise.
pub struct Graph {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    fault: Option<(Primitive, f64)>,
    clamp_events: usize,
    visit_log: Option<Vec<usize>>,
    frozen: Vec<Vec<f64>>,
    replay: Option<(Vec<Vec<f64>>, usize)>,
}

impl Graph {
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            fault: None,
            clamp_events: 0,
            visit_log: None,
            frozen: Vec::new(),
            replay: None,
        }
    }

    /// Multiplies the gradient propagated by every `kind` node by `factor`.
    /// Test-fixture hook for checking that the gradient harness notices a
    /// broken backward rule.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: Primitive, factor: f64) {
        self.fault = Some((kind, factor));
    }

    /// Records the order in which `backward` visits nodes.
    #[doc(hidden)]
    pub fn record_visits(&mut self) {
        self.visit_log = Some(Vec::new());
    }

    #[doc(hidden)]
    pub fn visits(&self) -> Option<&[usize]> {
        self.visit_log.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].shape
    }

    pub fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].shape[0]
    }

    pub fn cols(&self, v: Var) -> usize {
        self.nodes[v.0].shape[1]
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    /// Gradient of `v`; all zeros if `v` does not require gradients.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        let node = &self.nodes[v.0];
        if node.requires_grad {
            node.grad.clone()
        } else {
            vec![0.0; node.data.len()]
        }
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    /// Number of probabilities clamped by the loss since construction.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn push(&mut self, shape: [usize; 2], data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(data.len(), shape[0] * shape[1]);
        let grad = if requires_grad {
            vec![0.0; data.len()]
        } else {
            Vec::new()
        };
        self.nodes.push(Node {
            shape,
            data,
            grad,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ----- leaves -----------------------------------------------------------

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, shape: [usize; 2], data: Vec<f64>) -> Result<Var> {
        if data.len() != shape[0] * shape[1] {
            return Err(Error::shape("constant", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn row(&mut self, data: Vec<f64>) -> Var {
        let n = data.len();
        self.push([1, n], data, Op::Leaf, false)
    }

    /// Input that receives a gradient but is not backed by a store parameter.
    pub fn input(&mut self, shape: [usize; 2], data: Vec<f64>) -> Result<Var> {
        if data.len() != shape[0] * shape[1] {
            return Err(Error::shape("input", &shape, &[data.len()]));
        }
        Ok(self.push(shape, data, Op::Leaf, true))
    }

    /// Copies a store parameter into the graph as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.shape, p.data.clone(), Op::Param(id), true)
    }

    /// Row lookup into a parameter table: `|ids| x cols`.
    pub fn embed(&mut self, store: &ParamStore, table: ParamId, ids: &[usize]) -> Result<Var> {
        let p = store.get(table);
        let [rows, cols] = p.shape;
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::IndexOutOfRange {
                    table: p.name.clone(),
                    id,
                    rows,
                });
            }
            data.extend_from_slice(&p.data[id * cols..(id + 1) * cols]);
        }
        Ok(self.push(
            [ids.len(), cols],
            data,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            true,
        ))
    }

    /// Same values as `x`, but no gradient ever flows back into `x`.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let node = &self.nodes[x.0];
        let (shape, mut data) = (node.shape, node.data.clone());
        if let Some((values, next)) = self.replay.as_mut() {
            if let Some(v) = values.get(*next).filter(|v| v.len() == data.len()) {
                data.clone_from(v);
            }
            *next += 1;
        }
        self.frozen.push(data.clone());
        self.push(shape, data, Op::StopGradient, false)
    }

    /// Values produced by every `stop_gradient` call so far, in call order.
    pub fn frozen_values(&self) -> &[Vec<f64>] {
        &self.frozen
    }

    /// Makes the `k`-th `stop_gradient` call of this graph return
    /// `values[k]` instead of its input. Finite-difference checks use this to
    /// hold frozen branches at their unperturbed values.
    pub fn replay_frozen(&mut self, values: Vec<Vec<f64>>) {
        self.replay = Some((values, 0));
    }

    /// Standard Gumbel noise `-ln(-ln u)` with `u` clamped away from 0 and 1.
    pub fn gumbel_noise(&mut self, shape: [usize; 2]) -> Var {
        let n = shape[0] * shape[1];
        let data = (0..n)
            .map(|_| {
                let u: f64 = self.rng.random();
                let u = u.clamp(GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP);
                -(-u.ln()).ln()
            })
            .collect();
        self.push(shape, data, Op::Leaf, false)
    }

    // ----- linear algebra ---------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, k] = self.shape(a);
        let [k2, m] = self.shape(b);
        if k != k2 {
            return Err(Error::shape("matmul", &[n, k], &[k2, m]));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(self.data(a), self.data(b), &mut out, n, k, m);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push([n, m], out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let [r, c] = self.shape(x);
        let src = self.data(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.any_grad(&[x]);
        self.push([c, r], out, Op::Transpose(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x + y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a), out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x - y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a), out, Op::Sub(a, b), rg))
    }

    /// `x[n, m] + b[1, m]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let [n, m] = self.shape(x);
        if self.shape(b) != [1, m] {
            return Err(Error::shape("add_row", &[n, m], &self.shape(b)));
        }
        let bias = self.data(b);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(m.max(1)) {
            row.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        let rg = self.any_grad(&[x, b]);
        Ok(self.push([n, m], out, Op::AddRow(x, b), rg))
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.data(a), self.data(b), |x, y| x * y);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a), out, Op::Mul(a, b), rg))
    }

    /// `x[n, m] * g[1, m]`, broadcasting `g` over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let [n, m] = self.shape(x);
        if self.shape(g) != [1, m] {
            return Err(Error::shape("mul_row", &[n, m], &self.shape(g)));
        }
        let gain = self.data(g);
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(m.max(1)) {
            row.iter_mut().zip(gain).for_each(|(o, g)| *o *= g);
        }
        let rg = self.any_grad(&[x, g]);
        Ok(self.push([n, m], out, Op::MulRow(x, g), rg))
    }

    /// `x[n, m] * c[n, 1]`, broadcasting `c` over columns.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let [n, m] = self.shape(x);
        if self.shape(c) != [n, 1] {
            return Err(Error::shape("mul_col", &[n, m], &self.shape(c)));
        }
        let col = self.data(c);
        let mut out = self.data(x).to_vec();
        if m > 0 {
            for (row, s) in out.chunks_mut(m).zip(col) {
                row.iter_mut().for_each(|o| *o *= s);
            }
        }
        let rg = self.any_grad(&[x, c]);
        Ok(self.push([n, m], out, Op::MulCol(x, c), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.data(x).iter().map(|v| v * factor).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x), out, Op::Scale(x, factor), rg)
    }

    // ----- structure --------------------------------------------------------

    /// Concatenation along the last axis.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat_cols: no inputs"))?;
        let n = self.rows(first);
        for &x in xs {
            if self.rows(x) != n {
                return Err(Error::shape("concat_cols", &self.shape(first), &self.shape(x)));
            }
        }
        let total: usize = xs.iter().map(|&x| self.cols(x)).sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for &x in xs {
                let c = self.cols(x);
                out.extend_from_slice(&self.data(x)[i * c..(i + 1) * c]);
            }
        }
        let rg = self.any_grad(xs);
        Ok(self.push([n, total], out, Op::ConcatCols(xs.to_vec()), rg))
    }

    /// Concatenation along the first axis.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::invalid("concat_rows: no inputs"))?;
        let m = self.cols(first);
        for &x in xs {
            if self.cols(x) != m {
                return Err(Error::shape("concat_rows", &self.shape(first), &self.shape(x)));
            }
        }
        let n: usize = xs.iter().map(|&x| self.rows(x)).sum();
        let mut out = Vec::with_capacity(n * m);
        for &x in xs {
            out.extend_from_slice(self.data(x));
        }
        let rg = self.any_grad(xs);
        Ok(self.push([n, m], out, Op::ConcatRows(xs.to_vec()), rg))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let [n, m] = self.shape(x);
        if start + len > m {
            return Err(Error::shape("slice_cols", &[n, m], &[start, start + len]));
        }
        let src = self.data(x);
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&src[i * m + start..i * m + start + len]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push([n, len], out, Op::SliceCols { x, start }, rg))
    }

    /// Rows of `x` selected (with repetition) by `ids`.
    pub fn gather_rows(&mut self, x: Var, ids: &[usize]) -> Result<Var> {
        let [n, m] = self.shape(x);
        let src = self.data(x);
        let mut out = Vec::with_capacity(ids.len() * m);
        for &id in ids {
            if id >= n {
                return Err(Error::shape("gather_rows", &[n, m], &[id]));
            }
            out.extend_from_slice(&src[id * m..(id + 1) * m]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push([ids.len(), m], out, Op::GatherRows { x, ids: ids.to_vec() }, rg))
    }

    /// Each row repeated `times` times consecutively: `[n, m] -> [n * times, m]`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Var {
        let [n, m] = self.shape(x);
        let src = self.data(x);
        let mut out = Vec::with_capacity(n * times * m);
        for i in 0..n {
            for _ in 0..times {
                out.extend_from_slice(&src[i * m..(i + 1) * m]);
            }
        }
        let rg = self.any_grad(&[x]);
        self.push([n * times, m], out, Op::RepeatRows { x, times }, rg)
    }

    /// The whole matrix stacked `times` times: `[n, m] -> [times * n, m]`.
    pub fn tile_rows(&mut self, x: Var, times: usize) -> Var {
        let [n, m] = self.shape(x);
        let src = self.data(x);
        let mut out = Vec::with_capacity(n * times * m);
        for _ in 0..times {
            out.extend_from_slice(src);
        }
        let rg = self.any_grad(&[x]);
        self.push([times * n, m], out, Op::TileRows { x, times }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: [usize; 2]) -> Result<Var> {
        let old = self.shape(x);
        if old[0] * old[1] != shape[0] * shape[1] {
            return Err(Error::shape("reshape", &old, &shape));
        }
        let out = self.data(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(shape, out, Op::Reshape(x), rg))
    }

    // ----- nonlinearities ---------------------------------------------------

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x), out, Op::Sigmoid(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        let rg = self.any_grad(&[x]);
        self.push(self.shape(x), out, Op::Relu(x), rg)
    }

    /// Row-wise softmax over the last axis. Entries equal to `-inf` act as
    /// masks and receive probability exactly zero.
    pub fn softmax(&mut self, x: Var) -> Var {
        let [n, m] = self.shape(x);
        let mut out = self.data(x).to_vec();
        if m > 0 {
            for i in 0..n {
                softmax_in_place(&mut out[i * m..(i + 1) * m]);
            }
        }
        let rg = self.any_grad(&[x]);
        self.push([n, m], out, Op::Softmax(x), rg)
    }

    /// Row-wise normalisation to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let [n, m] = self.shape(x);
        let mut out = self.data(x).to_vec();
        let mut inv_std = Vec::with_capacity(n);
        for row in out.chunks_mut(m.max(1)).take(n) {
            let mean = row.iter().sum::<f64>() / m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * inv);
            inv_std.push(inv);
        }
        let rg = self.any_grad(&[x]);
        self.push([n, m], out, Op::LayerNorm { x, inv_std }, rg)
    }

    // ----- reductions -------------------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().sum();
        let rg = self.any_grad(&[x]);
        self.push([1, 1], vec![s], Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len().max(1) as f64;
        let rg = self.any_grad(&[x]);
        self.push([1, 1], vec![s], Op::Mean(x), rg)
    }

    /// Sum over the last axis: `[n, m] -> [n, 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let [n, m] = self.shape(x);
        let src = self.data(x);
        let out = (0..n).map(|i| src[i * m..(i + 1) * m].iter().sum()).collect();
        let rg = self.any_grad(&[x]);
        self.push([n, 1], out, Op::SumRows(x), rg)
    }

    /// Row-wise dot product: `[n, k] . [n, k] -> [n, 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let [n, k] = self.shape(a);
        let (da, db) = (self.data(a), self.data(b));
        let out = (0..n)
            .map(|i| dot(&da[i * k..(i + 1) * k], &db[i * k..(i + 1) * k]))
            .collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push([n, 1], out, Op::RowDot(a, b), rg))
    }

    // ----- block (batched) products ----------------------------------------

    /// Per-block product: `a` is `blocks` stacked `[r, k]` blocks, `b` is
    /// `blocks` stacked `[k, c]` blocks; the result stacks the `[r, c]` products.
    pub fn block_matmul(&mut self, a: Var, b: Var, blocks: usize) -> Result<Var> {
        let ([ar, k], [br, c]) = (self.shape(a), self.shape(b));
        if blocks == 0 || ar % blocks != 0 || br != blocks * k {
            return Err(Error::shape("block_matmul", &[ar, k], &[br, c]));
        }
        let r = ar / blocks;
        let mut out = vec![0.0; ar * c];
        let (da, db) = (self.data(a), self.data(b));
        for blk in 0..blocks {
            matmul_into(
                &da[blk * r * k..(blk + 1) * r * k],
                &db[blk * k * c..(blk + 1) * k * c],
                &mut out[blk * r * c..(blk + 1) * r * c],
                r,
                k,
                c,
            );
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push([ar, c], out, Op::BlockMatMul { a, b, blocks }, rg))
    }

    /// Per-block `A_i B_iᵀ`: `a` stacks `[r, k]` blocks, `b` stacks `[c, k]`
    /// blocks; the result stacks `[r, c]` blocks.
    pub fn block_matmul_nt(&mut self, a: Var, b: Var, blocks: usize) -> Result<Var> {
        let ([ar, k], [br, k2]) = (self.shape(a), self.shape(b));
        if blocks == 0 || ar % blocks != 0 || br % blocks != 0 || k != k2 {
            return Err(Error::shape("block_matmul_nt", &[ar, k], &[br, k2]));
        }
        let (r, c) = (ar / blocks, br / blocks);
        let mut out = vec![0.0; ar * c];
        let (da, db) = (self.data(a), self.data(b));
        for blk in 0..blocks {
            for i in 0..r {
                let arow = &da[(blk * r + i) * k..(blk * r + i + 1) * k];
                for j in 0..c {
                    let brow = &db[(blk * c + j) * k..(blk * c + j + 1) * k];
                    out[(blk * r + i) * c + j] = dot(arow, brow);
                }
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push([ar, c], out, Op::BlockMatMulNt { a, b, blocks }, rg))
    }

    // ----- loss -------------------------------------------------------------

    /// Summed binary cross-entropy `-Σ [y ln p + (1 - y) ln(1 - p)]` over a
    /// `[n, 1]` column of probabilities. Probabilities are clamped to
    /// `[PROB_CLAMP, 1 - PROB_CLAMP]`; each clamp is counted.
    pub fn binary_cross_entropy(&mut self, pred: Var, labels: &[f64]) -> Result<Var> {
        let [n, m] = self.shape(pred);
        if m != 1 || n != labels.len() {
            return Err(Error::shape("binary_cross_entropy", &[n, m], &[labels.len(), 1]));
        }
        let mut total = 0.0;
        let mut clamped = 0;
        for (&p, &y) in self.data(pred).iter().zip(labels) {
            let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if q != p {
                clamped += 1;
            }
            total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        }
        self.clamp_events += clamped;
        let rg = self.any_grad(&[pred]);
        Ok(self.push(
            [1, 1],
            vec![total],
            Op::BinaryCrossEntropy {
                pred,
                labels: labels.to_vec(),
            },
            rg,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, &self.shape(a), &self.shape(b)));
        }
        Ok(())
    }

    // ----- backward ---------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. Gradients accumulate into every
    /// node that requires them; call [`Graph::accumulate_param_grads`] to
    /// move parameter gradients into the store.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != [1, 1] {
            return Err(Error::shape("backward", &self.shape(loss), &[1, 1]));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad[0] += 1.0;
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Some(log) = self.visit_log.as_mut() {
                log.push(idx);
            }
            let mut grad = std::mem::take(&mut self.nodes[idx].grad);
            if let Some((kind, factor)) = self.fault {
                if self.nodes[idx].op.primitive() == kind {
                    let mut scaled = grad.clone();
                    scaled.iter_mut().for_each(|g| *g *= factor);
                    self.propagate(idx, &scaled);
                    self.nodes[idx].grad = grad;
                    continue;
                }
            }
            self.propagate(idx, &grad);
            grad.shrink_to_fit();
            self.nodes[idx].grad = grad;
        }
        Ok(())
    }

    /// Adds parent gradient contributions of node `idx` given its output gradient.
    fn propagate(&mut self, idx: usize, gout: &[f64]) {
        let op = self.nodes[idx].op.clone();
        let [n, m] = self.nodes[idx].shape;
        match op {
            Op::Leaf | Op::Param(_) | Op::Embed { .. } | Op::StopGradient => {}
            Op::MatMul(a, b) => {
                let k = self.cols(a);
                if self.nodes[a.0].requires_grad {
                    // dA = dOut · Bᵀ
                    let bd = self.nodes[b.0].data.clone();
                    let ga = &mut self.nodes[a.0].grad;
                    for i in 0..n {
                        let grow = &gout[i * m..(i + 1) * m];
                        for p in 0..k {
                            ga[i * k + p] += dot(grow, &bd[p * m..(p + 1) * m]);
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ · dOut
                    let ad = self.nodes[a.0].data.clone();
                    let gb = &mut self.nodes[b.0].grad;
                    for i in 0..n {
                        let grow = &gout[i * m..(i + 1) * m];
                        for p in 0..k {
                            let s = ad[i * k + p];
                            if s == 0.0 {
                                continue;
                            }
                            axpy(&mut gb[p * m..(p + 1) * m], s, grow);
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                if self.nodes[x.0].requires_grad {
                    // output is [n, m] = [c, r] of the input
                    let gx = &mut self.nodes[x.0].grad;
                    for i in 0..n {
                        for j in 0..m {
                            gx[j * n + i] += gout[i * m + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.acc(a, gout);
                self.acc(b, gout);
            }
            Op::Sub(a, b) => {
                self.acc(a, gout);
                if self.nodes[b.0].requires_grad {
                    let gb = &mut self.nodes[b.0].grad;
                    gb.iter_mut().zip(gout).for_each(|(g, o)| *g -= o);
                }
            }
            Op::AddRow(x, b) => {
                self.acc(x, gout);
                if self.nodes[b.0].requires_grad {
                    let gb = &mut self.nodes[b.0].grad;
                    for row in gout.chunks(m.max(1)).take(n) {
                        axpy(gb, 1.0, row);
                    }
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].data.clone();
                    let ga = &mut self.nodes[a.0].grad;
                    for ((g, o), y) in ga.iter_mut().zip(gout).zip(&bd) {
                        *g += o * y;
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].data.clone();
                    let gb = &mut self.nodes[b.0].grad;
                    for ((g, o), x) in gb.iter_mut().zip(gout).zip(&ad) {
                        *g += o * x;
                    }
                }
            }
            Op::MulRow(x, w) => {
                if self.nodes[x.0].requires_grad {
                    let wd = self.nodes[w.0].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for (grow, orow) in gx.chunks_mut(m.max(1)).zip(gout.chunks(m.max(1))) {
                        for ((g, o), s) in grow.iter_mut().zip(orow).zip(&wd) {
                            *g += o * s;
                        }
                    }
                }
                if self.nodes[w.0].requires_grad {
                    let xd = self.nodes[x.0].data.clone();
                    let gw = &mut self.nodes[w.0].grad;
                    for (xrow, orow) in xd.chunks(m.max(1)).zip(gout.chunks(m.max(1))) {
                        for ((g, o), v) in gw.iter_mut().zip(orow).zip(xrow) {
                            *g += o * v;
                        }
                    }
                }
            }
            Op::MulCol(x, c) => {
                if m == 0 {
                    return;
                }
                if self.nodes[x.0].requires_grad {
                    let cd = self.nodes[c.0].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for ((grow, orow), s) in gx.chunks_mut(m).zip(gout.chunks(m)).zip(&cd) {
                        axpy(grow, *s, orow);
                    }
                }
                if self.nodes[c.0].requires_grad {
                    let xd = self.nodes[x.0].data.clone();
                    let gc = &mut self.nodes[c.0].grad;
                    for (i, g) in gc.iter_mut().enumerate() {
                        *g += dot(&gout[i * m..(i + 1) * m], &xd[i * m..(i + 1) * m]);
                    }
                }
            }
            Op::Scale(x, factor) => {
                if self.nodes[x.0].requires_grad {
                    let gx = &mut self.nodes[x.0].grad;
                    axpy(gx, factor, gout);
                }
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for x in xs {
                    let c = self.cols(x);
                    if self.nodes[x.0].requires_grad {
                        let gx = &mut self.nodes[x.0].grad;
                        for i in 0..n {
                            axpy(
                                &mut gx[i * c..(i + 1) * c],
                                1.0,
                                &gout[i * m + offset..i * m + offset + c],
                            );
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for x in xs {
                    let len = self.nodes[x.0].data.len();
                    if self.nodes[x.0].requires_grad {
                        axpy(&mut self.nodes[x.0].grad, 1.0, &gout[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols { x, start } => {
                if self.nodes[x.0].requires_grad {
                    let c = self.cols(x);
                    let gx = &mut self.nodes[x.0].grad;
                    for i in 0..n {
                        axpy(
                            &mut gx[i * c + start..i * c + start + m],
                            1.0,
                            &gout[i * m..(i + 1) * m],
                        );
                    }
                }
            }
            Op::GatherRows { x, ids } => {
                if self.nodes[x.0].requires_grad {
                    let gx = &mut self.nodes[x.0].grad;
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(&mut gx[id * m..(id + 1) * m], 1.0, &gout[r * m..(r + 1) * m]);
                    }
                }
            }
            Op::RepeatRows { x, times } => {
                if self.nodes[x.0].requires_grad {
                    let gx = &mut self.nodes[x.0].grad;
                    for r in 0..n {
                        let src = r / times;
                        axpy(&mut gx[src * m..(src + 1) * m], 1.0, &gout[r * m..(r + 1) * m]);
                    }
                }
            }
            Op::TileRows { x, times } => {
                if self.nodes[x.0].requires_grad {
                    let len = self.nodes[x.0].data.len();
                    let gx = &mut self.nodes[x.0].grad;
                    for t in 0..times {
                        axpy(gx, 1.0, &gout[t * len..(t + 1) * len]);
                    }
                }
            }
            Op::Reshape(x) => self.acc(x, gout),
            Op::Sigmoid(x) => {
                if self.nodes[x.0].requires_grad {
                    let y = self.nodes[idx].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for ((g, o), s) in gx.iter_mut().zip(gout).zip(&y) {
                        *g += o * s * (1.0 - s);
                    }
                }
            }
            Op::Relu(x) => {
                if self.nodes[x.0].requires_grad {
                    let xd = self.nodes[x.0].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for ((g, o), v) in gx.iter_mut().zip(gout).zip(&xd) {
                        if *v > 0.0 {
                            *g += o;
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                if self.nodes[x.0].requires_grad && m > 0 {
                    let y = self.nodes[idx].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    for i in 0..n {
                        let (yr, or) = (&y[i * m..(i + 1) * m], &gout[i * m..(i + 1) * m]);
                        let s = dot(yr, or);
                        for j in 0..m {
                            gx[i * m + j] += yr[j] * (or[j] - s);
                        }
                    }
                }
            }
            Op::LayerNorm { x, inv_std } => {
                if self.nodes[x.0].requires_grad && m > 0 {
                    let y = self.nodes[idx].data.clone();
                    let gx = &mut self.nodes[x.0].grad;
                    let mf = m as f64;
                    for i in 0..n {
                        let (yr, or) = (&y[i * m..(i + 1) * m], &gout[i * m..(i + 1) * m]);
                        let mean_g = or.iter().sum::<f64>() / mf;
                        let mean_gy = dot(or, yr) / mf;
                        for j in 0..m {
                            gx[i * m + j] += inv_std[i] * (or[j] - mean_g - yr[j] * mean_gy);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if self.nodes[x.0].requires_grad {
                    let g = gout[0];
                    self.nodes[x.0].grad.iter_mut().for_each(|v| *v += g);
                }
            }
            Op::Mean(x) => {
                if self.nodes[x.0].requires_grad {
                    let len = self.nodes[x.0].grad.len().max(1) as f64;
                    let g = gout[0] / len;
                    self.nodes[x.0].grad.iter_mut().for_each(|v| *v += g);
                }
            }
            Op::SumRows(x) => {
                if self.nodes[x.0].requires_grad {
                    let c = self.cols(x);
                    let gx = &mut self.nodes[x.0].grad;
                    for i in 0..n {
                        gx[i * c..(i + 1) * c].iter_mut().for_each(|v| *v += gout[i]);
                    }
                }
            }
            Op::RowDot(a, b) => {
                let k = self.cols(a);
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].data.clone();
                    let ga = &mut self.nodes[a.0].grad;
                    for i in 0..n {
                        axpy(&mut ga[i * k..(i + 1) * k], gout[i], &bd[i * k..(i + 1) * k]);
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].data.clone();
                    let gb = &mut self.nodes[b.0].grad;
                    for i in 0..n {
                        axpy(&mut gb[i * k..(i + 1) * k], gout[i], &ad[i * k..(i + 1) * k]);
                    }
                }
            }
            Op::BlockMatMul { a, b, blocks } => {
                let k = self.cols(a);
                let r = n / blocks;
                let c = m;
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].data.clone();
                    let ga = &mut self.nodes[a.0].grad;
                    for blk in 0..blocks {
                        for i in 0..r {
                            let row = blk * r + i;
                            let grow = &gout[row * c..(row + 1) * c];
                            for p in 0..k {
                                let brow = &bd[(blk * k + p) * c..(blk * k + p + 1) * c];
                                ga[row * k + p] += dot(grow, brow);
                            }
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].data.clone();
                    let gb = &mut self.nodes[b.0].grad;
                    for blk in 0..blocks {
                        for i in 0..r {
                            let row = blk * r + i;
                            let grow = &gout[row * c..(row + 1) * c];
                            for p in 0..k {
                                let s = ad[row * k + p];
                                if s != 0.0 {
                                    let brow = blk * k + p;
                                    axpy(&mut gb[brow * c..(brow + 1) * c], s, grow);
                                }
                            }
                        }
                    }
                }
            }
            Op::BlockMatMulNt { a, b, blocks } => {
                let k = self.cols(a);
                let r = n / blocks;
                let c = m;
                if self.nodes[a.0].requires_grad {
                    let bd = self.nodes[b.0].data.clone();
                    let ga = &mut self.nodes[a.0].grad;
                    for blk in 0..blocks {
                        for i in 0..r {
                            let row = blk * r + i;
                            for j in 0..c {
                                let g = gout[row * c + j];
                                let brow = blk * c + j;
                                axpy(&mut ga[row * k..(row + 1) * k], g, &bd[brow * k..(brow + 1) * k]);
                            }
                        }
                    }
                }
                if self.nodes[b.0].requires_grad {
                    let ad = self.nodes[a.0].data.clone();
                    let gb = &mut self.nodes[b.0].grad;
                    for blk in 0..blocks {
                        for i in 0..r {
                            let row = blk * r + i;
                            for j in 0..c {
                                let g = gout[row * c + j];
                                let brow = blk * c + j;
                                axpy(&mut gb[brow * k..(brow + 1) * k], g, &ad[row * k..(row + 1) * k]);
                            }
                        }
                    }
                }
            }
            Op::BinaryCrossEntropy { pred, labels } => {
                if self.nodes[pred.0].requires_grad {
                    let pd = self.nodes[pred.0].data.clone();
                    let gp = &mut self.nodes[pred.0].grad;
                    for ((g, &p), &y) in gp.iter_mut().zip(&pd).zip(&labels) {
                        let q = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        if q != p {
                            continue;
                        }
                        *g += gout[0] * (-(y / q) + (1.0 - y) / (1.0 - q));
                    }
                }
            }
        }
    }

    fn acc(&mut self, x: Var, gout: &[f64]) {
        if self.nodes[x.0].requires_grad {
            axpy(&mut self.nodes[x.0].grad, 1.0, gout);
        }
    }

    /// Adds the gradients of every parameter leaf and embedding lookup into
    /// the store's gradient buffers. Embedding gradients are scattered into
    /// the looked-up rows only.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for node in &self.nodes {
            match &node.op {
                Op::Param(id) => axpy(&mut store.get_mut(*id).grad, 1.0, &node.grad),
                Op::Embed { table, ids } => {
                    let cols = node.shape[1];
                    let g = &mut store.get_mut(*table).grad;
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(
                            &mut g[id * cols..(id + 1) * cols],
                            1.0,
                            &node.grad[r * cols..(r + 1) * cols],
                        );
                    }
                }
                _ => {}
            }
        }
    }

    /// Sign pattern of every ReLU input. Two forward passes with equal
    /// patterns are on the same smooth piece of the network.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(x) = node.op {
                out.extend(self.nodes[x.0].data.iter().map(|&v| v > 0.0));
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax; `-inf` entries map to exactly zero.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|v| *v = u);
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let s = a[i * k + p];
            if s != 0.0 {
                axpy(orow, s, &b[p * m..(p + 1) * m]);
            }
        }
    }
}
