//! Reverse-mode automatic differentiation over a per-forward computation graph.
//!
//! A [`Graph`] records one forward pass; nodes are appended in evaluation
//! order, so walking them in reverse is a reverse-topological traversal.
//! Gradients accumulate by summation across all uses of a node. A graph is
//! confined to one thread and can be backpropagated once.

use std::cell::{Cell, RefCell};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::{self, Tensor, PROB_FLOOR};

type GradFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

struct Node {
    value: Arc<Tensor>,
    parents: Vec<usize>,
    grad_fn: Option<GradFn>,
    param: Option<ParamId>,
    needs_grad: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    /// Record gradient rules; dropout active when requested.
    Train,
    /// Values only: parameters enter as constants, dropout is identity.
    Eval,
}

/// One forward pass worth of operation records.
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    mode: Mode,
    consumed: Cell<bool>,
}

/// Handle to a node in a [`Graph`]. Cheap to copy; carries its 2-D view.
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: usize,
    rows: usize,
    cols: usize,
}

/// Per-parameter gradients produced by [`Graph::backward`].
///
/// Parameters the loss never touched read back as zeros.
pub struct Gradients {
    by_param: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros(n_params: usize) -> Self {
        Gradients {
            by_param: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.by_param[id.0].as_deref()
    }

    /// Dense view: zeros for untouched parameters.
    pub fn dense(&self, params: &ParamSet) -> Vec<Vec<f64>> {
        (0..params.len())
            .map(|i| {
                self.by_param[i]
                    .clone()
                    .unwrap_or_else(|| vec![0.0; params.get(ParamId(i)).numel()])
            })
            .collect()
    }

    /// self += other, in parameter order.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (dst, src) in self.by_param.iter_mut().zip(&other.by_param) {
            if let Some(s) = src {
                match dst {
                    Some(d) => {
                        for (a, b) in d.iter_mut().zip(s) {
                            *a += b;
                        }
                    }
                    None => *dst = Some(s.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in self.by_param.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= k;
            }
        }
    }
}

impl Graph {
    pub fn new(mode: Mode) -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
            mode,
            consumed: Cell::new(false),
        }
    }

    pub fn train() -> Self {
        Self::new(Mode::Train)
    }

    pub fn eval() -> Self {
        Self::new(Mode::Eval)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        param: Option<ParamId>,
        grad_fn: impl FnOnce() -> GradFn,
    ) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = self.mode == Mode::Train
            && (param.is_some()
                || value.requires_grad()
                || parents.iter().any(|&p| nodes[p].needs_grad));
        let (rows, cols) = value.dims2();
        let gf = if needs_grad && !parents.is_empty() {
            Some(grad_fn())
        } else {
            None
        };
        let id = nodes.len();
        nodes.push(Node {
            value: Arc::new(value),
            parents,
            grad_fn: gf,
            param,
            needs_grad,
        });
        Var {
            graph: self,
            id,
            rows,
            cols,
        }
    }

    /// Leaf with no gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value.with_requires_grad(false), vec![], None, || {
            unreachable!()
        })
    }

    /// Leaf honoring the tensor's requires_grad flag.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, vec![], None, || unreachable!())
    }

    /// Bind a parameter. In eval mode this is a constant view of the value.
    pub fn param(&self, params: &ParamSet, id: ParamId) -> Var<'_> {
        let value = params.shared(id);
        let (rows, cols) = value.dims2();
        let mut nodes = self.nodes.borrow_mut();
        let needs_grad = self.mode == Mode::Train;
        let nid = nodes.len();
        nodes.push(Node {
            value,
            parents: vec![],
            grad_fn: None,
            param: needs_grad.then_some(id),
            needs_grad,
        });
        Var {
            graph: self,
            id: nid,
            rows,
            cols,
        }
    }

    /// Reverse sweep from `loss`; every reachable parameter receives the sum
    /// of gradients over all of its uses.
    pub fn backward(&self, loss: Var<'_>, n_params: usize) -> Result<Gradients> {
        if self.consumed.replace(true) {
            return Err(Error::GraphConsumed);
        }
        let nodes = self.nodes.borrow();
        let loss_node = &nodes[loss.id];
        if loss_node.value.numel() != 1 {
            return Err(Error::NotScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        node_grads[loss.id] = Some(vec![1.0]);
        let mut out = Gradients::zeros(n_params);

        for id in (0..=loss.id).rev() {
            let Some(upstream) = node_grads[id].take() else {
                continue;
            };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            if let Some(pid) = node.param {
                match &mut out.by_param[pid.0] {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(&upstream) {
                            *a += b;
                        }
                    }
                    slot => *slot = Some(upstream.clone()),
                }
            }
            if let Some(gf) = &node.grad_fn {
                let parent_grads = gf(&upstream);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                    if !nodes[pid].needs_grad {
                        continue;
                    }
                    match &mut node_grads[pid] {
                        Some(acc) => {
                            for (a, b) in acc.iter_mut().zip(&pg) {
                                *a += b;
                            }
                        }
                        slot => *slot = Some(pg),
                    }
                }
            }
        }
        Ok(out)
    }
}

impl<'g> Var<'g> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape2(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn value(&self) -> Arc<Tensor> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    /// Copy of the underlying data.
    pub fn to_vec(&self) -> Vec<f64> {
        self.value().data().to_vec()
    }

    pub fn item(&self) -> f64 {
        let v = self.value();
        debug_assert_eq!(v.numel(), 1);
        v.data()[0]
    }

    /// Re-enter the value as a constant: gradient stops here.
    pub fn detach(&self) -> Var<'g> {
        let v = self.value();
        self.graph
            .constant(Tensor::new(v.shape().to_vec(), v.data().to_vec()).expect("detach"))
    }

    fn shapes_of(&self, other: &Var<'_>) -> (Vec<usize>, Vec<usize>) {
        (
            self.value().shape().to_vec(),
            other.value().shape().to_vec(),
        )
    }

    pub fn add(&self, other: &Var<'g>) -> Result<Var<'g>> {
        if self.shape2() != other.shape2() {
            let (l, r) = self.shapes_of(other);
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = other.value();
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self
            .graph
            .push(out, vec![self.id, other.id], None, || {
                Box::new(|g: &[f64]| vec![g.to_vec(), g.to_vec()])
            }))
    }

    pub fn sub(&self, other: &Var<'g>) -> Result<Var<'g>> {
        if self.shape2() != other.shape2() {
            let (l, r) = self.shapes_of(other);
            return Err(Error::ShapeMismatch {
                op: "sub",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = other.value();
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph.push(out, vec![self.id, other.id], None, || {
            Box::new(|g: &[f64]| vec![g.to_vec(), g.iter().map(|v| -v).collect()])
        }))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        if self.shape2() != other.shape2() {
            let (l, r) = self.shapes_of(other);
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = other.value();
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let (ac, bc) = (a.clone(), b.clone());
        Ok(self.graph.push(out, vec![self.id, other.id], None, || {
            Box::new(move |g: &[f64]| {
                let da = g.iter().zip(bc.data()).map(|(gi, bi)| gi * bi).collect();
                let db = g.iter().zip(ac.data()).map(|(gi, ai)| gi * ai).collect();
                vec![da, db]
            })
        }))
    }

    pub fn scale(&self, k: f64) -> Var<'g> {
        let a = self.value();
        let data = a.data().iter().map(|x| k * x).collect();
        let out = Tensor::new(a.shape().to_vec(), data).expect("scale");
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| vec![g.iter().map(|v| k * v).collect()])
        })
    }

    /// x + b with b broadcast across rows; b is (1, cols).
    pub fn add_bias_row(&self, bias: &Var<'g>) -> Result<Var<'g>> {
        if bias.rows != 1 || bias.cols != self.cols {
            let (l, r) = self.shapes_of(bias);
            return Err(Error::ShapeMismatch {
                op: "add_bias_row",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = bias.value();
        let (rows, cols) = self.shape2();
        let mut data = a.data().to_vec();
        for (r, chunk) in data.chunks_mut(cols).enumerate() {
            let _ = r;
            for (d, bv) in chunk.iter_mut().zip(b.data()) {
                *d += bv;
            }
        }
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.graph.push(out, vec![self.id, bias.id], None, || {
            Box::new(move |g: &[f64]| {
                let mut db = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        db[c] += g[r * cols + c];
                    }
                }
                vec![g.to_vec(), db]
            })
        }))
    }

    /// self (m,k) @ other (k,n).
    pub fn matmul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let (m, k) = self.shape2();
        let (k2, n) = other.shape2();
        if k != k2 {
            let (l, r) = self.shapes_of(other);
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = other.value();
        let data = tensor::matmul(a.data(), b.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        let (ac, bc) = (a.clone(), b.clone());
        Ok(self.graph.push(out, vec![self.id, other.id], None, || {
            Box::new(move |g: &[f64]| {
                // dA = g @ B^T, dB = A^T @ g
                let da = tensor::matmul_nt(g, bc.data(), m, n, k);
                let db = tensor::matmul_tn(ac.data(), g, m, k, n);
                vec![da, db]
            })
        }))
    }

    /// self (m,k) @ other^T where other is (n,k).
    pub fn matmul_nt(&self, other: &Var<'g>) -> Result<Var<'g>> {
        let (m, k) = self.shape2();
        let (n, k2) = other.shape2();
        if k != k2 {
            let (l, r) = self.shapes_of(other);
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: l,
                rhs: r,
            });
        }
        let a = self.value();
        let b = other.value();
        let data = tensor::matmul_nt(a.data(), b.data(), m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        let (ac, bc) = (a.clone(), b.clone());
        Ok(self.graph.push(out, vec![self.id, other.id], None, || {
            Box::new(move |g: &[f64]| {
                // out = A B^T: dA = g @ B, dB = g^T @ A
                let da = tensor::matmul(g, bc.data(), m, n, k);
                let db = tensor::matmul_tn(g, ac.data(), m, n, k);
                vec![da, db]
            })
        }))
    }

    pub fn tanh(&self) -> Var<'g> {
        let a = self.value();
        let data: Vec<f64> = a.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::new(a.shape().to_vec(), data).expect("tanh");
        let yc = Arc::new(out.clone());
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                vec![g
                    .iter()
                    .zip(yc.data())
                    .map(|(gi, y)| gi * (1.0 - y * y))
                    .collect()]
            })
        })
    }

    pub fn gelu(&self) -> Var<'g> {
        let a = self.value();
        let data = a.data().iter().map(|&x| tensor::gelu(x)).collect();
        let out = Tensor::new(a.shape().to_vec(), data).expect("gelu");
        let xc = a.clone();
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                vec![g
                    .iter()
                    .zip(xc.data())
                    .map(|(gi, &x)| gi * tensor::gelu_prime(x))
                    .collect()]
            })
        })
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax_rows(&self) -> Result<Var<'g>> {
        let (rows, cols) = self.shape2();
        if cols == 0 {
            return Err(Error::SoftmaxEmptyAxis);
        }
        let a = self.value();
        let data = tensor::softmax_rows(a.data(), rows, cols);
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let yc = Arc::new(out.clone());
        Ok(self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                let y = yc.data();
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let base = r * cols;
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g[base + c] * y[base + c];
                    }
                    for c in 0..cols {
                        dx[base + c] = y[base + c] * (g[base + c] - dot);
                    }
                }
                vec![dx]
            })
        }))
    }

    /// Per-row layer normalization with learned gain and bias (each (1, cols)).
    pub fn layer_norm(&self, gain: &Var<'g>, bias: &Var<'g>, eps: f64) -> Result<Var<'g>> {
        let (rows, cols) = self.shape2();
        if gain.cols != cols || gain.rows != 1 || bias.cols != cols || bias.rows != 1 {
            let (l, r) = self.shapes_of(gain);
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: l,
                rhs: r,
            });
        }
        let x = self.value();
        let gv = gain.value();
        let bv = bias.value();
        let mut xhat = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &x.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                let h = (row[c] - mean) * inv;
                xhat[r * cols + c] = h;
                data[r * cols + c] = h * gv.data()[c] + bv.data()[c];
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let xhat = Arc::new(xhat);
        let inv_std = Arc::new(inv_std);
        let gc = gv.clone();
        Ok(self
            .graph
            .push(out, vec![self.id, gain.id, bias.id], None, || {
                Box::new(move |g: &[f64]| {
                    let mut dx = vec![0.0; rows * cols];
                    let mut dgain = vec![0.0; cols];
                    let mut dbias = vec![0.0; cols];
                    for r in 0..rows {
                        let base = r * cols;
                        let mut mean_gh = 0.0;
                        let mut mean_gh_xhat = 0.0;
                        for c in 0..cols {
                            let gh = g[base + c] * gc.data()[c];
                            mean_gh += gh;
                            mean_gh_xhat += gh * xhat[base + c];
                            dgain[c] += g[base + c] * xhat[base + c];
                            dbias[c] += g[base + c];
                        }
                        mean_gh /= cols as f64;
                        mean_gh_xhat /= cols as f64;
                        for c in 0..cols {
                            let gh = g[base + c] * gc.data()[c];
                            dx[base + c] =
                                inv_std[r] * (gh - mean_gh - xhat[base + c] * mean_gh_xhat);
                        }
                    }
                    vec![dx, dgain, dbias]
                })
            }))
    }

    /// Embedding lookup: self is the (V, d) table, `ids` select rows.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Var<'g>> {
        let (v, d) = self.shape2();
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::IndexOutOfBounds {
                op: "gather_rows",
                index: bad,
                bound: v,
            });
        }
        let table = self.value();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let ids_c: Arc<Vec<usize>> = Arc::new(ids.to_vec());
        Ok(self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                let mut dt = vec![0.0; v * d];
                for (t, &i) in ids_c.iter().enumerate() {
                    for c in 0..d {
                        dt[i * d + c] += g[t * d + c];
                    }
                }
                vec![dt]
            })
        }))
    }

    /// Select a single row as a (1, cols) tensor.
    pub fn row(&self, index: usize) -> Result<Var<'g>> {
        let (rows, cols) = self.shape2();
        if index >= rows {
            return Err(Error::IndexOutOfBounds {
                op: "row",
                index,
                bound: rows,
            });
        }
        let a = self.value();
        let data = a.data()[index * cols..(index + 1) * cols].to_vec();
        let out = Tensor::new(vec![1, cols], data)?;
        Ok(self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; rows * cols];
                dx[index * cols..(index + 1) * cols].copy_from_slice(g);
                vec![dx]
            })
        }))
    }

    /// Column slice [lo, hi).
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Result<Var<'g>> {
        let (rows, cols) = self.shape2();
        if lo >= hi || hi > cols {
            return Err(Error::IndexOutOfBounds {
                op: "slice_cols",
                index: hi,
                bound: cols,
            });
        }
        let a = self.value();
        let w = hi - lo;
        let mut data = Vec::with_capacity(rows * w);
        for r in 0..rows {
            data.extend_from_slice(&a.data()[r * cols + lo..r * cols + hi]);
        }
        let out = Tensor::new(vec![rows, w], data)?;
        Ok(self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                let mut dx = vec![0.0; rows * cols];
                for r in 0..rows {
                    dx[r * cols + lo..r * cols + hi].copy_from_slice(&g[r * w..(r + 1) * w]);
                }
                vec![dx]
            })
        }))
    }

    /// Concatenate along columns; all inputs share the row count.
    pub fn concat_cols(parts: &[Var<'g>]) -> Result<Var<'g>> {
        assert!(!parts.is_empty(), "concat_cols needs at least one input");
        let graph = parts[0].graph;
        let rows = parts[0].rows;
        for p in parts {
            if p.rows != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: parts[0].value().shape().to_vec(),
                    rhs: p.value().shape().to_vec(),
                });
            }
        }
        let widths: Vec<usize> = parts.iter().map(|p| p.cols).collect();
        let total: usize = widths.iter().sum();
        let values: Vec<Arc<Tensor>> = parts.iter().map(|p| p.value()).collect();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, w) in values.iter().zip(&widths) {
                data.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let widths_c = widths.clone();
        Ok(graph.push(
            out,
            parts.iter().map(|p| p.id).collect(),
            None,
            || {
                Box::new(move |g: &[f64]| {
                    let mut grads: Vec<Vec<f64>> =
                        widths_c.iter().map(|w| Vec::with_capacity(rows * w)).collect();
                    for r in 0..rows {
                        let mut off = r * total;
                        for (gi, w) in grads.iter_mut().zip(&widths_c) {
                            gi.extend_from_slice(&g[off..off + w]);
                            off += w;
                        }
                    }
                    grads
                })
            },
        ))
    }

    pub fn sum_all(&self) -> Var<'g> {
        let a = self.value();
        let s: f64 = a.data().iter().sum();
        let n = a.numel();
        let out = Tensor::scalar(s);
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| vec![vec![g[0]; n]])
        })
    }

    pub fn mean_all(&self) -> Var<'g> {
        let a = self.value();
        let n = a.numel();
        let s: f64 = a.data().iter().sum::<f64>() / n as f64;
        let out = Tensor::scalar(s);
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| vec![vec![g[0] / n as f64; n]])
        })
    }

    /// Inverted dropout; identity in eval mode or at rate 0.
    pub fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Var<'g> {
        if self.graph.mode == Mode::Eval || rate <= 0.0 {
            return *self;
        }
        let a = self.value();
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..a.numel())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(a.shape().to_vec(), data).expect("dropout");
        let mask = Arc::new(mask);
        self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                vec![g.iter().zip(mask.iter()).map(|(gi, m)| gi * m).collect()]
            })
        })
    }

    /// -ln p[label] on a (1, k) probability row, clamped to [1e-12, 1].
    pub fn cross_entropy(&self, label: usize) -> Result<Var<'g>> {
        let (rows, cols) = self.shape2();
        if rows != 1 || label >= cols {
            return Err(Error::IndexOutOfBounds {
                op: "cross_entropy",
                index: label,
                bound: cols,
            });
        }
        let p = self.value();
        let pl = p.data()[label];
        let out = Tensor::scalar(-pl.clamp(PROB_FLOOR, 1.0).ln());
        Ok(self.graph.push(out, vec![self.id], None, || {
            Box::new(move |g: &[f64]| {
                let mut dp = vec![0.0; cols];
                if pl >= PROB_FLOOR {
                    dp[label] = -g[0] / pl.min(1.0);
                }
                vec![dp]
            })
        }))
    }

    /// KL(p || q) where self is p and `q` the second distribution, both (1, k).
    /// Terms with p_i = 0 contribute nothing; q is clamped away from zero.
    pub fn kl_div(&self, q: &Var<'g>) -> Result<Var<'g>> {
        if self.shape2() != q.shape2() || self.rows != 1 {
            let (l, r) = self.shapes_of(q);
            return Err(Error::ShapeMismatch {
                op: "kl_div",
                lhs: l,
                rhs: r,
            });
        }
        let pv = self.value();
        let qv = q.value();
        let out = Tensor::scalar(tensor::kl_divergence(pv.data(), qv.data()));
        let (pc, qc) = (pv.clone(), qv.clone());
        Ok(self.graph.push(out, vec![self.id, q.id], None, || {
            Box::new(move |g: &[f64]| {
                let k = pc.numel();
                let mut dp = vec![0.0; k];
                let mut dq = vec![0.0; k];
                for i in 0..k {
                    let pi = pc.data()[i];
                    let qi = qc.data()[i].clamp(PROB_FLOOR, 1.0);
                    if pi > 0.0 {
                        dp[i] = g[0] * ((pi.clamp(PROB_FLOOR, 1.0) / qi).ln() + 1.0);
                        dq[i] = -g[0] * pi / qi;
                    }
                }
                vec![dp, dq]
            })
        }))
    }

    /// Weighted combination sum_i a[i] * p_i over expert outputs.
    /// `a` is (1, n_e); each p_i is (1, k).
    pub fn combine(attention: &Var<'g>, probs: &[Var<'g>]) -> Result<Var<'g>> {
        let graph = attention.graph;
        let n_e = attention.cols;
        if attention.rows != 1 || probs.len() != n_e {
            return Err(Error::ShapeMismatch {
                op: "combine",
                lhs: attention.value().shape().to_vec(),
                rhs: vec![probs.len()],
            });
        }
        let k = probs[0].cols;
        for p in probs {
            if p.rows != 1 || p.cols != k {
                return Err(Error::ShapeMismatch {
                    op: "combine",
                    lhs: vec![1, k],
                    rhs: p.value().shape().to_vec(),
                });
            }
        }
        let av = attention.value();
        let pvs: Vec<Arc<Tensor>> = probs.iter().map(|p| p.value()).collect();
        let mut data = vec![0.0; k];
        for (i, p) in pvs.iter().enumerate() {
            let w = av.data()[i];
            for (d, pv) in data.iter_mut().zip(p.data()) {
                *d += w * pv;
            }
        }
        let out = Tensor::new(vec![1, k], data)?;
        let mut parents = vec![attention.id];
        parents.extend(probs.iter().map(|p| p.id));
        let av_c = av.clone();
        Ok(graph.push(out, parents, None, || {
            Box::new(move |g: &[f64]| {
                let mut grads = Vec::with_capacity(1 + pvs.len());
                let da: Vec<f64> = pvs
                    .iter()
                    .map(|p| p.data().iter().zip(g).map(|(x, gi)| x * gi).sum())
                    .collect();
                grads.push(da);
                for (i, _) in pvs.iter().enumerate() {
                    let w = av_c.data()[i];
                    grads.push(g.iter().map(|gi| w * gi).collect());
                }
                grads
            })
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSet;
    use rand::SeedableRng;

    fn param_set(pairs: &[(&str, Tensor)]) -> ParamSet {
        let mut ps = ParamSet::new();
        for (name, t) in pairs {
            ps.add(name, t.clone()).unwrap();
        }
        ps
    }

    #[test]
    fn backward_sum_is_ones() {
        let ps = param_set(&[("w", Tensor::vector(vec![1.0, 2.0, 3.0]))]);
        let g = Graph::train();
        let w = g.param(&ps, ps.id_of("w").unwrap());
        let loss = w.sum_all();
        let grads = g.backward(loss, ps.len()).unwrap();
        assert_eq!(grads.get(ps.id_of("w").unwrap()).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_tanh_at_zero() {
        let ps = param_set(&[("w", Tensor::vector(vec![0.0]))]);
        let g = Graph::train();
        let w = g.param(&ps, ps.id_of("w").unwrap());
        let loss = w.tanh().sum_all();
        let grads = g.backward(loss, ps.len()).unwrap();
        assert!((grads.get(ps.id_of("w").unwrap()).unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_twice_errors() {
        let ps = param_set(&[("w", Tensor::vector(vec![1.0]))]);
        let g = Graph::train();
        let w = g.param(&ps, ps.id_of("w").unwrap());
        let loss = w.sum_all();
        g.backward(loss, ps.len()).unwrap();
        assert!(matches!(
            g.backward(loss, ps.len()),
            Err(Error::GraphConsumed)
        ));
    }

    #[test]
    fn unreachable_param_gets_zero() {
        let ps = param_set(&[
            ("used", Tensor::vector(vec![2.0])),
            ("unused", Tensor::vector(vec![3.0])),
        ]);
        let g = Graph::train();
        let w = g.param(&ps, ps.id_of("used").unwrap());
        let loss = w.sum_all();
        let grads = g.backward(loss, ps.len()).unwrap();
        assert!(grads.get(ps.id_of("unused").unwrap()).is_none());
        let dense = grads.dense(&ps);
        assert_eq!(dense[ps.id_of("unused").unwrap().0], vec![0.0]);
    }

    #[test]
    fn gradient_accumulates_over_uses() {
        // loss = sum(w*w) + sum(w)  =>  d/dw = 2w + 1
        let ps = param_set(&[("w", Tensor::vector(vec![3.0, -1.0]))]);
        let g = Graph::train();
        let w = g.param(&ps, ps.id_of("w").unwrap());
        let sq = w.mul(&w).unwrap().sum_all();
        let lin = w.sum_all();
        let loss = sq.add(&lin).unwrap();
        let grads = g.backward(loss, ps.len()).unwrap();
        let got = grads.get(ps.id_of("w").unwrap()).unwrap();
        assert!((got[0] - 7.0).abs() < 1e-12);
        assert!((got[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let g = Graph::eval();
        let a = g.constant(Tensor::zeros(vec![2, 3]));
        let b = g.constant(Tensor::zeros(vec![4, 5]));
        match a.matmul(&b) {
            Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 5]);
            }
            other => panic!("expected shape mismatch, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn softmax_empty_axis_errors() {
        let g = Graph::eval();
        let a = g.constant(Tensor::zeros(vec![2, 0]));
        assert!(matches!(a.softmax_rows(), Err(Error::SoftmaxEmptyAxis)));
    }

    #[test]
    fn layernorm_unit_example() {
        let g = Graph::eval();
        let x = g.constant(Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap());
        let gain = g.constant(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap());
        let bias = g.constant(Tensor::zeros(vec![1, 2]));
        let y = x.layer_norm(&gain, &bias, 1e-5).unwrap();
        let v = y.to_vec();
        assert!((v[0] - 1.0).abs() < 1e-4);
        assert!((v[1] + 1.0).abs() < 1e-4);
    }

    #[test]
    fn eval_mode_records_no_gradients() {
        let ps = param_set(&[("w", Tensor::vector(vec![1.0, 2.0]))]);
        let g = Graph::eval();
        let w = g.param(&ps, ps.id_of("w").unwrap());
        let loss = w.sum_all();
        let grads = g.backward(loss, ps.len()).unwrap();
        assert!(grads.get(ps.id_of("w").unwrap()).is_none());
    }

    #[test]
    fn dropout_eval_is_identity() {
        let g = Graph::eval();
        let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = x.dropout(0.5, &mut rng);
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn combine_matches_arithmetic() {
        let g = Graph::eval();
        let a = g.constant(Tensor::new(vec![1, 2], vec![0.5, 0.5]).unwrap());
        let p1 = g.constant(Tensor::new(vec![1, 2], vec![0.9, 0.1]).unwrap());
        let p2 = g.constant(Tensor::new(vec![1, 2], vec![0.3, 0.7]).unwrap());
        let out = Var::combine(&a, &[p1, p2]).unwrap();
        let v = out.to_vec();
        assert!((v[0] - 0.6).abs() < 1e-12);
        assert!((v[1] - 0.4).abs() < 1e-12);
    }
}
