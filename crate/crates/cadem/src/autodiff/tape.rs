//! The recording tape and its differentiable operations.

use std::cell::RefCell;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;

use super::sparse::SparseMatrix;
use crate::error::{CademError, Result};

/// Floor for log arguments inside cross-entropy.
pub(crate) const LOG_FLOOR: f64 = 1e-12;

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value {
    tape_id: u64,
    index: usize,
}

/// Row-reduction mode for graph pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Sum of rows ("add-pooling"); `Sum` is an alias kept for config files.
    Add,
    Mean,
    Sum,
}

enum Op {
    Leaf,
    Matmul(usize, usize),
    SparseDense(Arc<SparseMatrix>, usize),
    SelectRows(usize, Arc<Vec<usize>>),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Mul(usize, usize),
    MulColVec(usize, usize),
    Relu(usize),
    Sigmoid(usize),
    SumRows(usize),
    MeanRows(usize),
    SumCols(usize),
    Mean(usize),
    FrobeniusSq(usize),
    ConcatCols(usize, usize),
    StackRows(Arc<Vec<usize>>),
    Dropout(usize, Arc<Array2<f64>>),
    SoftmaxCrossEntropy {
        logits: usize,
        targets: Arc<Array2<f64>>,
        softmax: Arc<Array2<f64>>,
    },
}

struct Node {
    data: Array2<f64>,
    grad: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Arena of computation nodes. Creation order is a topological order of the
/// graph, so backward is a single reverse sweep.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn check(&self, v: Value) -> Result<usize> {
        if v.tape_id != self.id {
            return Err(CademError::Contract(
                "value belongs to a different tape".into(),
            ));
        }
        Ok(v.index)
    }

    fn push(&self, data: Array2<f64>, op: Op, requires_grad: bool) -> Value {
        let mut nodes = self.nodes.borrow_mut();
        let grad = Array2::zeros(data.raw_dim());
        nodes.push(Node {
            data,
            grad,
            op,
            requires_grad,
        });
        Value {
            tape_id: self.id,
            index: nodes.len() - 1,
        }
    }

    fn requires(&self, idx: usize) -> bool {
        self.nodes.borrow()[idx].requires_grad
    }

    fn dim(&self, idx: usize) -> (usize, usize) {
        self.nodes.borrow()[idx].data.dim()
    }

    /// New trainable leaf.
    pub fn leaf(&self, data: Array2<f64>) -> Value {
        self.push(data, Op::Leaf, true)
    }

    /// New non-trainable leaf.
    pub fn constant(&self, data: Array2<f64>) -> Value {
        self.push(data, Op::Leaf, false)
    }

    pub fn data(&self, v: Value) -> Result<Array2<f64>> {
        let idx = self.check(v)?;
        Ok(self.nodes.borrow()[idx].data.clone())
    }

    pub fn grad(&self, v: Value) -> Result<Array2<f64>> {
        let idx = self.check(v)?;
        Ok(self.nodes.borrow()[idx].grad.clone())
    }

    pub fn shape(&self, v: Value) -> Result<(usize, usize)> {
        let idx = self.check(v)?;
        Ok(self.dim(idx))
    }

    /// Scalar payload of a 1x1 node.
    pub fn scalar(&self, v: Value) -> Result<f64> {
        let idx = self.check(v)?;
        let nodes = self.nodes.borrow();
        if nodes[idx].data.dim() != (1, 1) {
            return Err(CademError::Contract(format!(
                "scalar() on a {:?} node",
                nodes[idx].data.dim()
            )));
        }
        Ok(nodes[idx].data[[0, 0]])
    }

    pub fn matmul(&self, a: Value, b: Value) -> Result<Value> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (ar, ac) = self.dim(ai);
        let (br, bc) = self.dim(bi);
        if ac != br {
            return Err(CademError::Shape(format!(
                "matmul {ar}x{ac} . {br}x{bc}"
            )));
        }
        let req = self.requires(ai) || self.requires(bi);
        let data = {
            let nodes = self.nodes.borrow();
            nodes[ai].data.dot(&nodes[bi].data)
        };
        Ok(self.push(data, Op::Matmul(ai, bi), req))
    }

    /// y = s · x where s is a constant sparse operator.
    pub fn sparse_dense_matmul(&self, s: &Arc<SparseMatrix>, x: Value) -> Result<Value> {
        let xi = self.check(x)?;
        let data = {
            let nodes = self.nodes.borrow();
            s.mul_dense(&nodes[xi].data)?
        };
        let req = self.requires(xi);
        Ok(self.push(data, Op::SparseDense(Arc::clone(s), xi), req))
    }

    /// Row gather: y[r] = x[indices[r]].
    pub fn select_rows(&self, x: Value, indices: &[usize]) -> Result<Value> {
        let xi = self.check(x)?;
        let (rows, cols) = self.dim(xi);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(CademError::InvalidArgument(format!(
                "select_rows index {bad} out of bounds for {rows} rows"
            )));
        }
        let mut data = Array2::zeros((indices.len(), cols));
        {
            let nodes = self.nodes.borrow();
            for (r, &src) in indices.iter().enumerate() {
                data.row_mut(r).assign(&nodes[xi].data.row(src));
            }
        }
        let req = self.requires(xi);
        Ok(self.push(
            data,
            Op::SelectRows(xi, Arc::new(indices.to_vec())),
            req,
        ))
    }

    fn binary_same_shape(&self, a: Value, b: Value, name: &str) -> Result<(usize, usize)> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        if self.dim(ai) != self.dim(bi) {
            return Err(CademError::Shape(format!(
                "{name}: {:?} vs {:?}",
                self.dim(ai),
                self.dim(bi)
            )));
        }
        Ok((ai, bi))
    }

    pub fn add(&self, a: Value, b: Value) -> Result<Value> {
        let (ai, bi) = self.binary_same_shape(a, b, "add")?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[ai].data + &nodes[bi].data
        };
        let req = self.requires(ai) || self.requires(bi);
        Ok(self.push(data, Op::Add(ai, bi), req))
    }

    pub fn sub(&self, a: Value, b: Value) -> Result<Value> {
        let (ai, bi) = self.binary_same_shape(a, b, "sub")?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[ai].data - &nodes[bi].data
        };
        let req = self.requires(ai) || self.requires(bi);
        Ok(self.push(data, Op::Sub(ai, bi), req))
    }

    pub fn scale(&self, a: Value, factor: f64) -> Result<Value> {
        let ai = self.check(a)?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[ai].data * factor
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::Scale(ai, factor), req))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Value, b: Value) -> Result<Value> {
        let (ai, bi) = self.binary_same_shape(a, b, "mul")?;
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[ai].data * &nodes[bi].data
        };
        let req = self.requires(ai) || self.requires(bi);
        Ok(self.push(data, Op::Mul(ai, bi), req))
    }

    /// Broadcast an m×1 column across the columns of an m×n matrix.
    pub fn mul_colvec(&self, a: Value, v: Value) -> Result<Value> {
        let (ai, vi) = (self.check(a)?, self.check(v)?);
        let (ar, _) = self.dim(ai);
        let (vr, vc) = self.dim(vi);
        if vc != 1 || vr != ar {
            return Err(CademError::Shape(format!(
                "mul_colvec: matrix {:?} with column {:?}",
                self.dim(ai),
                self.dim(vi)
            )));
        }
        let data = {
            let nodes = self.nodes.borrow();
            let mut out = nodes[ai].data.clone();
            for (mut row, &s) in out.rows_mut().into_iter().zip(nodes[vi].data.column(0)) {
                row *= s;
            }
            out
        };
        let req = self.requires(ai) || self.requires(vi);
        Ok(self.push(data, Op::MulColVec(ai, vi), req))
    }

    pub fn relu(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let data = {
            let nodes = self.nodes.borrow();
            nodes[ai].data.mapv(|x| x.max(0.0))
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::Relu(ai), req))
    }

    pub fn sigmoid(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let data = {
            let nodes = self.nodes.borrow();
            nodes[ai].data.mapv(|x| 1.0 / (1.0 + (-x).exp()))
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::Sigmoid(ai), req))
    }

    /// Sum of rows: m×n → 1×n.
    pub fn sum_rows(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let (_, cols) = self.dim(ai);
        let data = {
            let nodes = self.nodes.borrow();
            nodes[ai]
                .data
                .sum_axis(ndarray::Axis(0))
                .into_shape_with_order((1, cols))
                .expect("row sum reshape")
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::SumRows(ai), req))
    }

    /// Mean of rows: m×n → 1×n.
    pub fn mean_rows(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let (rows, cols) = self.dim(ai);
        if rows == 0 {
            return Err(CademError::InvalidArgument("mean_rows of empty matrix".into()));
        }
        let data = {
            let nodes = self.nodes.borrow();
            (nodes[ai].data.sum_axis(ndarray::Axis(0)) / rows as f64)
                .into_shape_with_order((1, cols))
                .expect("row mean reshape")
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::MeanRows(ai), req))
    }

    /// Pool node embeddings into a single row.
    pub fn pool_rows(&self, a: Value, mode: PoolMode) -> Result<Value> {
        match mode {
            PoolMode::Add | PoolMode::Sum => self.sum_rows(a),
            PoolMode::Mean => self.mean_rows(a),
        }
    }

    /// Sum of columns: m×n → m×1.
    pub fn sum_cols(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let (rows, _) = self.dim(ai);
        let data = {
            let nodes = self.nodes.borrow();
            nodes[ai]
                .data
                .sum_axis(ndarray::Axis(1))
                .into_shape_with_order((rows, 1))
                .expect("col sum reshape")
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::SumCols(ai), req))
    }

    /// Mean over all entries: 1×1.
    pub fn mean(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let (rows, cols) = self.dim(ai);
        let data = {
            let nodes = self.nodes.borrow();
            Array2::from_elem((1, 1), nodes[ai].data.sum() / (rows * cols) as f64)
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::Mean(ai), req))
    }

    /// Squared Frobenius norm: 1×1.
    pub fn frobenius_sq(&self, a: Value) -> Result<Value> {
        let ai = self.check(a)?;
        let data = {
            let nodes = self.nodes.borrow();
            Array2::from_elem((1, 1), nodes[ai].data.iter().map(|x| x * x).sum())
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::FrobeniusSq(ai), req))
    }

    /// Horizontal concatenation: m×p, m×q → m×(p+q).
    pub fn concat_cols(&self, a: Value, b: Value) -> Result<Value> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (ar, ac) = self.dim(ai);
        let (br, bc) = self.dim(bi);
        if ar != br {
            return Err(CademError::Shape(format!(
                "concat_cols: {ar}x{ac} with {br}x{bc}"
            )));
        }
        let data = {
            let nodes = self.nodes.borrow();
            let mut out = Array2::zeros((ar, ac + bc));
            out.slice_mut(ndarray::s![.., ..ac]).assign(&nodes[ai].data);
            out.slice_mut(ndarray::s![.., ac..]).assign(&nodes[bi].data);
            out
        };
        let req = self.requires(ai) || self.requires(bi);
        Ok(self.push(data, Op::ConcatCols(ai, bi), req))
    }

    /// Vertical stack of values sharing a column count.
    pub fn stack_rows(&self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(CademError::InvalidArgument("stack_rows of nothing".into()));
        }
        let idxs: Vec<usize> = parts
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<_>>()?;
        let cols = self.dim(idxs[0]).1;
        let mut total_rows = 0;
        for &i in &idxs {
            let (r, c) = self.dim(i);
            if c != cols {
                return Err(CademError::Shape(format!(
                    "stack_rows: inconsistent column counts {cols} vs {c}"
                )));
            }
            total_rows += r;
        }
        let (data, req) = {
            let nodes = self.nodes.borrow();
            let mut out = Array2::zeros((total_rows, cols));
            let mut at = 0;
            let mut req = false;
            for &i in &idxs {
                let r = nodes[i].data.nrows();
                out.slice_mut(ndarray::s![at..at + r, ..])
                    .assign(&nodes[i].data);
                at += r;
                req |= nodes[i].requires_grad;
            }
            (out, req)
        };
        Ok(self.push(data, Op::StackRows(Arc::new(idxs)), req))
    }

    /// Inverted dropout: each entry kept with probability 1-p and scaled by
    /// 1/(1-p). Apply only in training mode.
    pub fn dropout<R: Rng>(&self, a: Value, p: f64, rng: &mut R) -> Result<Value> {
        if !(0.0..1.0).contains(&p) {
            return Err(CademError::Config(format!("dropout probability {p}")));
        }
        let ai = self.check(a)?;
        if p == 0.0 {
            // Keep the node count stable regardless of p.
            let nodes_len = {
                let nodes = self.nodes.borrow();
                nodes[ai].data.raw_dim()
            };
            let mask = Arc::new(Array2::ones(nodes_len));
            let data = self.nodes.borrow()[ai].data.clone();
            let req = self.requires(ai);
            return Ok(self.push(data, Op::Dropout(ai, mask), req));
        }
        let keep = 1.0 - p;
        let dim = {
            let nodes = self.nodes.borrow();
            nodes[ai].data.raw_dim()
        };
        let mask = Array2::from_shape_fn(dim, |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let mask = Arc::new(mask);
        let data = {
            let nodes = self.nodes.borrow();
            &nodes[ai].data * mask.as_ref()
        };
        let req = self.requires(ai);
        Ok(self.push(data, Op::Dropout(ai, mask), req))
    }

    /// Mean softmax cross-entropy over rows. Targets must be one-hot rows.
    pub fn softmax_cross_entropy(&self, logits: Value, targets: &Array2<f64>) -> Result<Value> {
        let li = self.check(logits)?;
        let (rows, cols) = self.dim(li);
        if cols < 2 {
            return Err(CademError::Config(format!(
                "softmax_cross_entropy needs at least 2 classes, got {cols}"
            )));
        }
        if targets.dim() != (rows, cols) {
            return Err(CademError::Shape(format!(
                "targets {:?} vs logits {rows}x{cols}",
                targets.dim()
            )));
        }
        for (r, row) in targets.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&x| x == 1.0).count();
            let zeros = row.iter().filter(|&&x| x == 0.0).count();
            if ones != 1 || zeros != cols - 1 {
                return Err(CademError::InvalidArgument(format!(
                    "target row {r} is not one-hot"
                )));
            }
        }
        let (softmax, loss) = {
            let nodes = self.nodes.borrow();
            let l = &nodes[li].data;
            let mut p = Array2::zeros((rows, cols));
            let mut loss = 0.0;
            for i in 0..rows {
                let row = l.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut denom = 0.0;
                for j in 0..cols {
                    let e = (row[j] - max).exp();
                    p[[i, j]] = e;
                    denom += e;
                }
                for j in 0..cols {
                    p[[i, j]] /= denom;
                    if targets[[i, j]] == 1.0 {
                        loss -= p[[i, j]].max(LOG_FLOOR).ln();
                    }
                }
            }
            (p, loss / rows as f64)
        };
        let req = self.requires(li);
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCrossEntropy {
                logits: li,
                targets: Arc::new(targets.clone()),
                softmax: Arc::new(softmax),
            },
            req,
        ))
    }

    /// Reverse sweep from a scalar loss. Populates the gradient of every
    /// reachable node with `requires_grad`; all other gradients are untouched.
    pub fn backward(&self, loss: Value) -> Result<()> {
        let root = self.check(loss)?;
        let mut nodes = self.nodes.borrow_mut();
        if nodes[root].data.dim() != (1, 1) {
            return Err(CademError::Contract(format!(
                "backward requires a scalar loss, got {:?}",
                nodes[root].data.dim()
            )));
        }

        let mut marked = vec![false; nodes.len()];
        if nodes[root].requires_grad {
            let mut stack = vec![root];
            while let Some(i) = stack.pop() {
                if marked[i] {
                    continue;
                }
                marked[i] = true;
                for_each_parent(&nodes[i].op, |p| {
                    if nodes[p].requires_grad && !marked[p] {
                        stack.push(p);
                    }
                });
            }
        }

        for (i, node) in nodes.iter_mut().enumerate() {
            if marked[i] {
                node.grad.fill(0.0);
            }
        }
        if !nodes[root].requires_grad {
            return Ok(());
        }
        nodes[root].grad[[0, 0]] = 1.0;

        for i in (0..=root).rev() {
            if !marked[i] {
                continue;
            }
            let g = std::mem::replace(&mut nodes[i].grad, Array2::zeros((0, 0)));
            propagate(&mut nodes, i, &g);
            nodes[i].grad = g;
        }
        Ok(())
    }
}

fn for_each_parent(op: &Op, mut f: impl FnMut(usize)) {
    match op {
        Op::Leaf => {}
        Op::Matmul(a, b)
        | Op::Add(a, b)
        | Op::Sub(a, b)
        | Op::Mul(a, b)
        | Op::MulColVec(a, b)
        | Op::ConcatCols(a, b) => {
            f(*a);
            f(*b);
        }
        Op::SparseDense(_, x)
        | Op::SelectRows(x, _)
        | Op::Scale(x, _)
        | Op::Relu(x)
        | Op::Sigmoid(x)
        | Op::SumRows(x)
        | Op::MeanRows(x)
        | Op::SumCols(x)
        | Op::Mean(x)
        | Op::FrobeniusSq(x)
        | Op::Dropout(x, _) => f(*x),
        Op::StackRows(parts) => {
            for &p in parts.iter() {
                f(p);
            }
        }
        Op::SoftmaxCrossEntropy { logits, .. } => f(*logits),
    }
}

/// Push the upstream gradient `g` of node `i` into its parents.
fn propagate(nodes: &mut [Node], i: usize, g: &Array2<f64>) {
    enum Delta {
        None,
        One(usize, Array2<f64>),
        Two((usize, Array2<f64>), (usize, Array2<f64>)),
        Many(Vec<(usize, Array2<f64>)>),
    }

    let deltas = {
        let node = &nodes[i];
        match &node.op {
            Op::Leaf => Delta::None,
            Op::Matmul(a, b) => {
                let da = if nodes[*a].requires_grad {
                    Some((*a, g.dot(&nodes[*b].data.t())))
                } else {
                    None
                };
                let db = if nodes[*b].requires_grad {
                    Some((*b, nodes[*a].data.t().dot(g)))
                } else {
                    None
                };
                match (da, db) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::SparseDense(s, x) => {
                if nodes[*x].requires_grad {
                    Delta::One(*x, s.transpose_mul_dense(g).expect("shape checked at record"))
                } else {
                    Delta::None
                }
            }
            Op::SelectRows(x, idx) => {
                if nodes[*x].requires_grad {
                    let mut dx = Array2::zeros(nodes[*x].data.raw_dim());
                    for (r, &src) in idx.iter().enumerate() {
                        let mut dst = dx.row_mut(src);
                        dst += &g.row(r);
                    }
                    Delta::One(*x, dx)
                } else {
                    Delta::None
                }
            }
            Op::Add(a, b) => {
                let da = nodes[*a].requires_grad.then(|| (*a, g.clone()));
                let db = nodes[*b].requires_grad.then(|| (*b, g.clone()));
                match (da, db) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::Sub(a, b) => {
                let da = nodes[*a].requires_grad.then(|| (*a, g.clone()));
                let db = nodes[*b].requires_grad.then(|| (*b, g.mapv(|x| -x)));
                match (da, db) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::Scale(x, c) => {
                if nodes[*x].requires_grad {
                    Delta::One(*x, g * *c)
                } else {
                    Delta::None
                }
            }
            Op::Mul(a, b) => {
                let da = nodes[*a]
                    .requires_grad
                    .then(|| (*a, g * &nodes[*b].data));
                let db = nodes[*b]
                    .requires_grad
                    .then(|| (*b, g * &nodes[*a].data));
                match (da, db) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::MulColVec(a, v) => {
                let da = nodes[*a].requires_grad.then(|| {
                    let mut out = g.clone();
                    for (mut row, &s) in out
                        .rows_mut()
                        .into_iter()
                        .zip(nodes[*v].data.column(0))
                    {
                        row *= s;
                    }
                    (*a, out)
                });
                let dv = nodes[*v].requires_grad.then(|| {
                    let prod = g * &nodes[*a].data;
                    let col = prod.sum_axis(ndarray::Axis(1));
                    let rows = col.len();
                    (
                        *v,
                        col.into_shape_with_order((rows, 1)).expect("column reshape"),
                    )
                });
                match (da, dv) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::Relu(x) => {
                if nodes[*x].requires_grad {
                    let mask = nodes[*x].data.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    Delta::One(*x, g * &mask)
                } else {
                    Delta::None
                }
            }
            Op::Sigmoid(x) => {
                if nodes[*x].requires_grad {
                    let y = &node.data;
                    Delta::One(*x, g * &(y * &y.mapv(|v| 1.0 - v)))
                } else {
                    Delta::None
                }
            }
            Op::SumRows(x) => {
                if nodes[*x].requires_grad {
                    let (rows, _) = nodes[*x].data.dim();
                    let mut dx = Array2::zeros(nodes[*x].data.raw_dim());
                    for mut row in dx.rows_mut() {
                        row += &g.row(0);
                    }
                    let _ = rows;
                    Delta::One(*x, dx)
                } else {
                    Delta::None
                }
            }
            Op::MeanRows(x) => {
                if nodes[*x].requires_grad {
                    let (rows, _) = nodes[*x].data.dim();
                    let scaled = g.row(0).mapv(|v| v / rows as f64);
                    let mut dx = Array2::zeros(nodes[*x].data.raw_dim());
                    for mut row in dx.rows_mut() {
                        row += &scaled;
                    }
                    Delta::One(*x, dx)
                } else {
                    Delta::None
                }
            }
            Op::SumCols(x) => {
                if nodes[*x].requires_grad {
                    let mut dx = Array2::zeros(nodes[*x].data.raw_dim());
                    for (mut row, &gv) in dx.rows_mut().into_iter().zip(g.column(0)) {
                        row.fill(gv);
                    }
                    Delta::One(*x, dx)
                } else {
                    Delta::None
                }
            }
            Op::Mean(x) => {
                if nodes[*x].requires_grad {
                    let (rows, cols) = nodes[*x].data.dim();
                    let v = g[[0, 0]] / (rows * cols) as f64;
                    Delta::One(*x, Array2::from_elem((rows, cols), v))
                } else {
                    Delta::None
                }
            }
            Op::FrobeniusSq(x) => {
                if nodes[*x].requires_grad {
                    Delta::One(*x, nodes[*x].data.mapv(|v| 2.0 * v * g[[0, 0]]))
                } else {
                    Delta::None
                }
            }
            Op::ConcatCols(a, b) => {
                let ac = nodes[*a].data.ncols();
                let da = nodes[*a]
                    .requires_grad
                    .then(|| (*a, g.slice(ndarray::s![.., ..ac]).to_owned()));
                let db = nodes[*b]
                    .requires_grad
                    .then(|| (*b, g.slice(ndarray::s![.., ac..]).to_owned()));
                match (da, db) {
                    (Some(x), Some(y)) => Delta::Two(x, y),
                    (Some(x), None) | (None, Some(x)) => Delta::One(x.0, x.1),
                    (None, None) => Delta::None,
                }
            }
            Op::StackRows(parts) => {
                let mut out = Vec::new();
                let mut at = 0;
                for &p in parts.iter() {
                    let r = nodes[p].data.nrows();
                    if nodes[p].requires_grad {
                        out.push((p, g.slice(ndarray::s![at..at + r, ..]).to_owned()));
                    }
                    at += r;
                }
                Delta::Many(out)
            }
            Op::Dropout(x, mask) => {
                if nodes[*x].requires_grad {
                    Delta::One(*x, g * mask.as_ref())
                } else {
                    Delta::None
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                targets,
                softmax,
            } => {
                if nodes[*logits].requires_grad {
                    let b = softmax.nrows() as f64;
                    let d = (softmax.as_ref() - targets.as_ref()) * (g[[0, 0]] / b);
                    Delta::One(*logits, d)
                } else {
                    Delta::None
                }
            }
        }
    };

    match deltas {
        Delta::None => {}
        Delta::One(p, d) => nodes[p].grad += &d,
        Delta::Two((p1, d1), (p2, d2)) => {
            nodes[p1].grad += &d1;
            nodes[p2].grad += &d2;
        }
        Delta::Many(list) => {
            for (p, d) in list {
                nodes[p].grad += &d;
            }
        }
    }
}
