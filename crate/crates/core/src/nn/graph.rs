//! Reverse-mode differentiation over row-major matrices.
//!
//! A [`Graph`] records every operation as a node. Values are immutable and
//! shared through `Arc`, so binding parameters into a graph never copies
//! them. Gradients are themselves built from graph operations, which makes
//! the built-in operations differentiable twice: [`Graph::grad`] with
//! `create_graph = true` returns gradient nodes that can be folded into a
//! further loss (the input-gradient penalty relies on this). Custom
//! operations ([`CustomOp`]) are first-order only.
//!
//! Layout conventions used throughout the crate: batches are rows; a batch of
//! sequences of length `T` is stored as `N*T` rows with row `n*T + t`.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use crate::{Error, Result};

pub type Mat = Array2<f64>;

/// Sentinel in a [`CellMap`] for "no source cell" (reads as zero).
pub const NO_CELL: u32 = u32::MAX;

/// A linear cell-to-cell index map used by gather/scatter.
///
/// `sources[i]` is the flat row-major index into a matrix of `input_shape`
/// feeding flat cell `i` of a matrix of `output_shape`.
#[derive(Debug)]
pub struct CellMap {
    pub sources: Vec<u32>,
    pub input_shape: (usize, usize),
    pub output_shape: (usize, usize),
}

/// A first-order operation with a hand-written vector-Jacobian product.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;

    /// Input gradients given the inputs, the output and the output gradient.
    /// `None` marks an input without a gradient.
    fn backward(&self, inputs: &[Arc<Mat>], output: &Mat, grad: &Mat) -> Vec<Option<Mat>>;
}

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Powf(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    SumAll(usize),
    Expand(usize),
    SumRows(usize),
    BroadcastRows(usize),
    SumCols(usize),
    BroadcastCols(usize),
    SegmentSumRows(usize, usize),
    RepeatRows(usize, usize),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    ConcatCols(Vec<usize>),
    Interleave(Vec<usize>),
    GatherRows(usize, Arc<Vec<usize>>),
    ScatterRows(usize, Arc<Vec<usize>>),
    Gather(usize, Arc<CellMap>),
    Scatter(usize, Arc<CellMap>),
    Reshape(usize),
    Custom(Arc<dyn CustomOp>, Vec<usize>),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul { a, b, .. } => vec![*a, *b],
            Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | MulCol(a, b) => vec![*a, *b],
            Scale(x, _)
            | AddScalar(x)
            | Powf(x, _)
            | Tanh(x)
            | Sigmoid(x)
            | Relu(x)
            | LeakyRelu(x, _) => {
                vec![*x]
            }
            SumAll(x) | Expand(x) | SumRows(x) | BroadcastRows(x) | SumCols(x)
            | BroadcastCols(x) => {
                vec![*x]
            }
            SegmentSumRows(x, _)
            | RepeatRows(x, _)
            | SliceCols(x, _)
            | PadCols(x, _)
            | Reshape(x) => vec![*x],
            GatherRows(x, _) | ScatterRows(x, _) | Gather(x, _) | Scatter(x, _) => vec![*x],
            ConcatCols(v) | Interleave(v) | Custom(_, v) => v.clone(),
        }
    }
}

struct Node {
    value: Arc<Mat>,
    op: Op,
    requires_grad: bool,
}

/// A recording of matrix operations.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.len()).finish()
    }
}

/// A handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

fn mat_shape(m: &Mat) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

fn ensure_finite(m: &Mat, what: &str) {
    debug_assert!(
        m.iter().all(|v| v.is_finite()),
        "non-finite output of {what}"
    );
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(1024)),
            recording: Cell::new(true),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> Var<'_> {
        self.push_arc(Arc::new(value), op)
    }

    fn push_arc(&self, value: Arc<Mat>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad =
            self.recording.get() && op.inputs().iter().any(|&i| nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn leaf(&self, value: Arc<Mat>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    /// A value that gradients are never taken with respect to.
    pub fn constant(&self, value: impl Into<Arc<Mat>>) -> Var<'_> {
        self.leaf(value.into(), false)
    }

    /// A differentiable leaf (parameter or designated input).
    pub fn variable(&self, value: impl Into<Arc<Mat>>) -> Var<'_> {
        self.leaf(value.into(), true)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Mat::from_elem((1, 1), v))
    }

    fn value(&self, id: usize) -> Arc<Mat> {
        self.nodes.borrow()[id].value.clone()
    }

    fn requires(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    fn var(&self, id: usize) -> Var<'_> {
        Var { graph: self, id }
    }

    /// Records a custom first-order operation with a precomputed output.
    pub fn custom<'g>(&'g self, op: Arc<dyn CustomOp>, inputs: &[Var<'g>], output: Mat) -> Var<'g> {
        ensure_finite(&output, op.name());
        self.push(
            output,
            Op::Custom(op, inputs.iter().map(|v| v.id).collect()),
        )
    }

    /// Gradients of a scalar `loss` with respect to every differentiable leaf.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let grads = self.backprop(loss, None, false)?;
        let nodes = self.nodes.borrow();
        Ok(Gradients {
            grads: grads
                .into_iter()
                .map(|g| g.map(|id| nodes[id].value.clone()))
                .collect(),
        })
    }

    /// Gradients of `loss` with respect to `wrt`. With `create_graph`, the
    /// returned nodes are themselves differentiable.
    pub fn grad<'g>(
        &'g self,
        loss: Var<'g>,
        wrt: &[Var<'g>],
        create_graph: bool,
    ) -> Result<Vec<Option<Var<'g>>>> {
        let targets: Vec<usize> = wrt.iter().map(|v| v.id).collect();
        let grads = self.backprop(loss, Some(&targets), create_graph)?;
        Ok(targets
            .iter()
            .map(|&t| grads.get(t).copied().flatten().map(|id| self.var(id)))
            .collect())
    }

    fn backprop(
        &self,
        loss: Var<'_>,
        targets: Option<&[usize]>,
        create_graph: bool,
    ) -> Result<Vec<Option<usize>>> {
        if loss.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "gradients need a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let n = loss.id + 1;
        // Nodes lying on a path from a target to the loss.
        let relevant: Vec<bool> = {
            let nodes = self.nodes.borrow();
            let mut rel = vec![false; n];
            for id in 0..n {
                let node = &nodes[id];
                rel[id] = node.requires_grad
                    && match targets {
                        None => true,
                        Some(t) => t.contains(&id) || node.op.inputs().iter().any(|&i| rel[i]),
                    };
            }
            rel
        };
        let previous = self.recording.replace(create_graph);
        let result = self.propagate(loss, n, &relevant, create_graph);
        self.recording.set(previous);
        result
    }

    fn propagate(
        &self,
        loss: Var<'_>,
        n: usize,
        relevant: &[bool],
        create_graph: bool,
    ) -> Result<Vec<Option<usize>>> {
        let mut grads: Vec<Option<usize>> = vec![None; n];
        grads[loss.id] = Some(self.scalar(1.0).id);
        for id in (0..n).rev() {
            let Some(gid) = grads[id] else { continue };
            if !relevant[id] {
                continue;
            }
            let op = self.nodes.borrow()[id].op.clone();
            let g = self.var(gid);
            let y = self.var(id);
            let contributions = self.vjp(&op, y, g, create_graph)?;
            for (input, grad) in contributions {
                if !relevant[input] {
                    continue;
                }
                grads[input] = Some(match grads[input] {
                    None => grad.id,
                    Some(prev) => (self.var(prev) + grad).id,
                });
            }
        }
        Ok(grads)
    }

    fn vjp<'g>(
        &'g self,
        op: &Op,
        y: Var<'g>,
        g: Var<'g>,
        create_graph: bool,
    ) -> Result<Vec<(usize, Var<'g>)>> {
        use Op::*;
        let v = |id| self.var(id);
        Ok(match op {
            Leaf => vec![],
            MatMul { a, b, ta, tb } => {
                let (a, b) = (v(*a), v(*b));
                let ga = match (ta, tb) {
                    (false, false) => g.matmul_t(b, false, true),
                    (false, true) => g.matmul_t(b, false, false),
                    (true, false) => b.matmul_t(g, false, true),
                    (true, true) => b.matmul_t(g, true, true),
                };
                let gb = match (ta, tb) {
                    (false, false) => a.matmul_t(g, true, false),
                    (true, false) => a.matmul_t(g, false, false),
                    (false, true) => g.matmul_t(a, true, false),
                    (true, true) => g.matmul_t(a, true, true),
                };
                vec![(a.id, ga), (b.id, gb)]
            }
            Add(a, b) => vec![(*a, g), (*b, g)],
            Sub(a, b) => vec![(*a, g), (*b, -g)],
            Mul(a, b) => vec![(*a, g * v(*b)), (*b, g * v(*a))],
            AddRow(x, b) => vec![(*x, g), (*b, g.sum_rows())],
            MulCol(x, c) => vec![(*x, g.mul_col(v(*c))), (*c, (g * v(*x)).sum_cols())],
            Scale(x, k) => vec![(*x, g * *k)],
            AddScalar(x) => vec![(*x, g)],
            Powf(x, p) => vec![(*x, g * (v(*x).powf(p - 1.0) * *p))],
            Tanh(x) => vec![(*x, g * ((y * y) * -1.0 + 1.0))],
            Sigmoid(x) => vec![(*x, g * (y * (y * -1.0 + 1.0)))],
            Relu(x) => {
                let mask = v(*x).value().mapv(|u| if u > 0.0 { 1.0 } else { 0.0 });
                vec![(*x, g * self.constant(mask))]
            }
            LeakyRelu(x, slope) => {
                let mask = v(*x).value().mapv(|u| if u > 0.0 { 1.0 } else { *slope });
                vec![(*x, g * self.constant(mask))]
            }
            SumAll(x) => {
                let (r, c) = v(*x).shape();
                vec![(*x, g.expand(r, c))]
            }
            Expand(x) => vec![(*x, g.sum_all())],
            SumRows(x) => vec![(*x, g.broadcast_rows(v(*x).shape().0))],
            BroadcastRows(x) => vec![(*x, g.sum_rows())],
            SumCols(x) => vec![(*x, g.broadcast_cols(v(*x).shape().1))],
            BroadcastCols(x) => vec![(*x, g.sum_cols())],
            SegmentSumRows(x, seg) => vec![(*x, g.repeat_rows(*seg))],
            RepeatRows(x, seg) => vec![(*x, g.segment_sum_rows(*seg))],
            SliceCols(x, start) => vec![(*x, g.pad_cols(*start, v(*x).shape().1))],
            PadCols(x, start) => vec![(*x, g.slice_cols(*start, v(*x).shape().1))],
            ConcatCols(xs) => {
                let mut start = 0;
                xs.iter()
                    .map(|&x| {
                        let w = v(x).shape().1;
                        let out = (x, g.slice_cols(start, w));
                        start += w;
                        out
                    })
                    .collect()
            }
            Interleave(xs) => {
                let steps = xs.len();
                let rows = v(xs[0]).shape().0;
                xs.iter()
                    .enumerate()
                    .map(|(t, &x)| {
                        let idx: Vec<usize> = (0..rows).map(|n| n * steps + t).collect();
                        (x, g.gather_rows(Arc::new(idx)))
                    })
                    .collect()
            }
            GatherRows(x, idx) => vec![(*x, g.scatter_rows(idx.clone(), v(*x).shape().0))],
            ScatterRows(x, idx) => vec![(*x, g.gather_rows(idx.clone()))],
            Gather(x, map) => vec![(*x, g.scatter(map.clone()))],
            Scatter(x, map) => vec![(*x, g.gather(map.clone()))],
            Reshape(x) => {
                let (r, c) = v(*x).shape();
                vec![(*x, g.reshape(r, c))]
            }
            Custom(custom, xs) => {
                if create_graph {
                    return Err(Error::Contract(format!(
                        "custom op `{}` does not support higher-order gradients",
                        custom.name()
                    )));
                }
                let inputs: Vec<Arc<Mat>> = xs.iter().map(|&x| self.value(x)).collect();
                let out = y.value();
                let grad = g.value();
                custom
                    .backward(&inputs, &out, &grad)
                    .into_iter()
                    .zip(xs)
                    .filter_map(|(gx, &x)| gx.map(|gx| (x, self.constant(gx))))
                    .collect()
            }
        })
    }
}

/// Gradients indexed by node.
pub struct Gradients {
    grads: Vec<Option<Arc<Mat>>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<Arc<Mat>> {
        self.grads.get(var.id).cloned().flatten()
    }
}

fn elementwise(a: &Mat, b: &Mat, what: &str, f: impl Fn(f64, f64) -> f64) -> Mat {
    assert_eq!(
        a.shape(),
        b.shape(),
        "{what}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
    Zip::from(a).and(b).map_collect(|&x, &y| f(x, y))
}

fn standard(m: &Mat) -> std::borrow::Cow<'_, [f64]> {
    match m.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(m.iter().copied().collect()),
    }
}

impl<'g> Var<'g> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn graph(self) -> &'g Graph {
        self.graph
    }

    pub fn value(self) -> Arc<Mat> {
        self.graph.value(self.id)
    }

    pub fn shape(self) -> (usize, usize) {
        mat_shape(&self.graph.nodes.borrow()[self.id].value)
    }

    pub fn requires_grad(self) -> bool {
        self.graph.requires(self.id)
    }

    /// Value of a 1x1 node.
    pub fn item(self) -> f64 {
        let v = self.value();
        assert_eq!(mat_shape(&v), (1, 1), "item() on non-scalar");
        v[[0, 0]]
    }

    fn unary(self, value: Mat, op: Op) -> Var<'g> {
        self.graph.push(value, op)
    }

    /// `op(self) * op(other)` where `op` optionally transposes.
    pub fn matmul_t(self, other: Var<'g>, ta: bool, tb: bool) -> Var<'g> {
        let a = self.value();
        let b = other.value();
        let av: ArrayView2<f64> = if ta { a.t() } else { a.view() };
        let bv: ArrayView2<f64> = if tb { b.t() } else { b.view() };
        assert_eq!(
            av.ncols(),
            bv.nrows(),
            "matmul: {:?} x {:?}",
            av.shape(),
            bv.shape()
        );
        let out = av.dot(&bv);
        self.graph.push(
            out,
            Op::MatMul {
                a: self.id,
                b: other.id,
                ta,
                tb,
            },
        )
    }

    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        self.matmul_t(other, false, false)
    }

    /// Adds a `1 x C` row to every row.
    pub fn add_row(self, row: Var<'g>) -> Var<'g> {
        let x = self.value();
        let b = row.value();
        assert_eq!(b.nrows(), 1, "add_row expects a single row");
        assert_eq!(b.ncols(), x.ncols(), "add_row width mismatch");
        let out = &*x + &b.row(0);
        self.graph.push(out, Op::AddRow(self.id, row.id))
    }

    /// Multiplies every row by the matching entry of an `R x 1` column.
    pub fn mul_col(self, col: Var<'g>) -> Var<'g> {
        let x = self.value();
        let c = col.value();
        assert_eq!(c.ncols(), 1, "mul_col expects a single column");
        assert_eq!(c.nrows(), x.nrows(), "mul_col height mismatch");
        let out = &*x * &*c;
        self.graph.push(out, Op::MulCol(self.id, col.id))
    }

    pub fn powf(self, p: f64) -> Var<'g> {
        let out = self.value().mapv(|x| x.powf(p));
        ensure_finite(&out, "powf");
        self.unary(out, Op::Powf(self.id, p))
    }

    pub fn tanh(self) -> Var<'g> {
        let out = self.value().mapv(f64::tanh);
        self.unary(out, Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'g> {
        let out = self.value().mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.unary(out, Op::Sigmoid(self.id))
    }

    pub fn relu(self) -> Var<'g> {
        let out = self.value().mapv(|x| x.max(0.0));
        self.unary(out, Op::Relu(self.id))
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'g> {
        let out = self.value().mapv(|x| if x > 0.0 { x } else { slope * x });
        self.unary(out, Op::LeakyRelu(self.id, slope))
    }

    pub fn square(self) -> Var<'g> {
        self * self
    }

    pub fn sum_all(self) -> Var<'g> {
        let s = self.value().sum();
        self.unary(Mat::from_elem((1, 1), s), Op::SumAll(self.id))
    }

    pub fn expand(self, rows: usize, cols: usize) -> Var<'g> {
        let s = self.item();
        self.unary(Mat::from_elem((rows, cols), s), Op::Expand(self.id))
    }

    /// `R x C -> 1 x C`.
    pub fn sum_rows(self) -> Var<'g> {
        let out = self.value().sum_axis(Axis(0)).insert_axis(Axis(0));
        self.unary(out, Op::SumRows(self.id))
    }

    pub fn broadcast_rows(self, rows: usize) -> Var<'g> {
        let x = self.value();
        assert_eq!(x.nrows(), 1);
        let out = x
            .broadcast((rows, x.ncols()))
            .expect("broadcast")
            .to_owned();
        self.unary(out, Op::BroadcastRows(self.id))
    }

    /// `R x C -> R x 1`.
    pub fn sum_cols(self) -> Var<'g> {
        let out = self.value().sum_axis(Axis(1)).insert_axis(Axis(1));
        self.unary(out, Op::SumCols(self.id))
    }

    pub fn broadcast_cols(self, cols: usize) -> Var<'g> {
        let x = self.value();
        assert_eq!(x.ncols(), 1);
        let out = x
            .broadcast((x.nrows(), cols))
            .expect("broadcast")
            .to_owned();
        self.unary(out, Op::BroadcastCols(self.id))
    }

    /// Sums consecutive groups of `seg` rows: `(R*seg) x C -> R x C`.
    pub fn segment_sum_rows(self, seg: usize) -> Var<'g> {
        let x = self.value();
        assert!(
            seg > 0 && x.nrows() % seg == 0,
            "segment_sum_rows: {} rows by {seg}",
            x.nrows()
        );
        let groups = x.nrows() / seg;
        let mut out = Mat::zeros((groups, x.ncols()));
        for (gi, mut row) in out.outer_iter_mut().enumerate() {
            for r in 0..seg {
                row += &x.row(gi * seg + r);
            }
        }
        self.unary(out, Op::SegmentSumRows(self.id, seg))
    }

    /// Repeats each row `seg` times consecutively: `R x C -> (R*seg) x C`.
    pub fn repeat_rows(self, seg: usize) -> Var<'g> {
        let x = self.value();
        let mut out = Mat::zeros((x.nrows() * seg, x.ncols()));
        for (r, row) in x.outer_iter().enumerate() {
            for k in 0..seg {
                out.row_mut(r * seg + k).assign(&row);
            }
        }
        self.unary(out, Op::RepeatRows(self.id, seg))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'g> {
        let out = self.value().slice(s![.., start..start + len]).to_owned();
        self.unary(out, Op::SliceCols(self.id, start))
    }

    /// Zero-pads to `total` columns with `self` starting at column `start`.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'g> {
        let x = self.value();
        let mut out = Mat::zeros((x.nrows(), total));
        out.slice_mut(s![.., start..start + x.ncols()]).assign(&*x);
        self.unary(out, Op::PadCols(self.id, start))
    }

    pub fn gather_rows(self, idx: Arc<Vec<usize>>) -> Var<'g> {
        let x = self.value();
        let mut out = Mat::zeros((idx.len(), x.ncols()));
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).assign(&x.row(i));
        }
        self.unary(out, Op::GatherRows(self.id, idx))
    }

    /// Adjoint of `gather_rows`: row `o` of `self` is added to row `idx[o]`.
    pub fn scatter_rows(self, idx: Arc<Vec<usize>>, rows: usize) -> Var<'g> {
        let x = self.value();
        assert_eq!(x.nrows(), idx.len());
        let mut out = Mat::zeros((rows, x.ncols()));
        for (o, &i) in idx.iter().enumerate() {
            let mut row = out.row_mut(i);
            row += &x.row(o);
        }
        self.unary(out, Op::ScatterRows(self.id, idx))
    }

    pub fn gather(self, map: Arc<CellMap>) -> Var<'g> {
        let x = self.value();
        assert_eq!(mat_shape(&x), map.input_shape, "gather input shape");
        let src = standard(&x);
        let data: Vec<f64> = map
            .sources
            .iter()
            .map(|&i| if i == NO_CELL { 0.0 } else { src[i as usize] })
            .collect();
        let out = Mat::from_shape_vec(map.output_shape, data).expect("gather shape");
        self.unary(out, Op::Gather(self.id, map))
    }

    /// Adjoint of `gather`.
    pub fn scatter(self, map: Arc<CellMap>) -> Var<'g> {
        let x = self.value();
        assert_eq!(mat_shape(&x), map.output_shape, "scatter input shape");
        let src = standard(&x);
        let (r, c) = map.input_shape;
        let mut data = vec![0.0; r * c];
        for (k, &i) in map.sources.iter().enumerate() {
            if i != NO_CELL {
                data[i as usize] += src[k];
            }
        }
        let out = Mat::from_shape_vec(map.input_shape, data).expect("scatter shape");
        self.unary(out, Op::Scatter(self.id, map))
    }

    /// Row-major reshape.
    pub fn reshape(self, rows: usize, cols: usize) -> Var<'g> {
        let x = self.value();
        let data = standard(&x).into_owned();
        let out = Mat::from_shape_vec((rows, cols), data).expect("reshape size");
        self.unary(out, Op::Reshape(self.id))
    }
}

/// Column-wise concatenation.
pub fn concat_cols<'g>(parts: &[Var<'g>]) -> Var<'g> {
    let graph = parts[0].graph;
    let values: Vec<Arc<Mat>> = parts.iter().map(|p| p.value()).collect();
    let views: Vec<ArrayView2<f64>> = values.iter().map(|v| v.view()).collect();
    let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row mismatch");
    graph.push(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect()))
}

/// Interleaves `T` matrices of shape `N x D` into `(N*T) x D` with row
/// `n*T + t` taken from `parts[t]` row `n`.
pub fn interleave_rows<'g>(parts: &[Var<'g>]) -> Var<'g> {
    let graph = parts[0].graph;
    let steps = parts.len();
    let values: Vec<Arc<Mat>> = parts.iter().map(|p| p.value()).collect();
    let (n, d) = mat_shape(&values[0]);
    let mut out = Mat::zeros((n * steps, d));
    for (t, v) in values.iter().enumerate() {
        assert_eq!(mat_shape(v), (n, d), "interleave_rows shape mismatch");
        for r in 0..n {
            out.row_mut(r * steps + t).assign(&v.row(r));
        }
    }
    graph.push(out, Op::Interleave(parts.iter().map(|p| p.id).collect()))
}

impl<'g> ops::Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        let out = elementwise(&self.value(), &rhs.value(), "add", |a, b| a + b);
        self.graph.push(out, Op::Add(self.id, rhs.id))
    }
}

impl<'g> ops::Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        let out = elementwise(&self.value(), &rhs.value(), "sub", |a, b| a - b);
        self.graph.push(out, Op::Sub(self.id, rhs.id))
    }
}

impl<'g> ops::Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        let out = elementwise(&self.value(), &rhs.value(), "mul", |a, b| a * b);
        self.graph.push(out, Op::Mul(self.id, rhs.id))
    }
}

impl<'g> ops::Mul<f64> for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, k: f64) -> Var<'g> {
        let out = self.value().mapv(|x| x * k);
        self.graph.push(out, Op::Scale(self.id, k))
    }
}

impl<'g> ops::Add<f64> for Var<'g> {
    type Output = Var<'g>;
    fn add(self, k: f64) -> Var<'g> {
        let out = self.value().mapv(|x| x + k);
        self.graph.push(out, Op::AddScalar(self.id))
    }
}

impl<'g> ops::Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self * -1.0
    }
}
