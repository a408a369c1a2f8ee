//! Operation tape and reverse-mode gradient propagation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::array::Tensor;
use super::kernels;
use super::lstm::{self, CellCache, ScanCache};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    MatMul { a: Var, b: Var },
    BiasAdd { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, factor: f64 },
    Embedding { table: Var, ids: Vec<usize> },
    Conv1d { x: Var, kernel: Var },
    Conv2d { x: Var, kernel: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { x: Var },
    SelectRow { x: Var, row: usize },
    Relu { x: Var },
    Elu { x: Var, alpha: f64 },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Dropout { x: Var, mask: Vec<f64> },
    Sum { x: Var },
    WeightedSum { x: Var, weights: Vec<f64> },
    LstmCell { x: Var, h: Var, c: Var, w_ih: Var, w_hh: Var, bias: Var, cache: CellCache },
    LstmScan { x: Var, w_ih: Var, w_hh: Var, bias: Var, cache: ScanCache },
    Bce { logits: Var, targets: Vec<f64>, weights: Vec<f64>, scale: f64 },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) requires_grad: bool,
    pub(crate) op: Op,
}

/// Records primitive applications in topological order and replays them in
/// reverse to accumulate gradients. A tape supports exactly one backward
/// pass; record a fresh forward before calling it again.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
    training: bool,
    check_finite: bool,
    pub(crate) dropout_rng: ChaCha8Rng,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            training: false,
            check_finite: false,
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Training mode enables dropout; evaluation mode makes it the identity.
    pub fn training(mut self, dropout_rng: ChaCha8Rng) -> Self {
        self.training = true;
        self.dropout_rng = dropout_rng;
        self
    }

    /// Reject any primitive whose output contains NaN or infinity.
    pub fn check_finite(mut self, on: bool) -> Self {
        self.check_finite = on;
        self
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the loss with respect to `v` after [`Tape::backward`].
    /// `None` for values that do not require gradients or were never reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, zero-filled when the loss does not depend on it.
    pub fn grad_or_zero(&self, v: Var) -> Vec<f64> {
        match self.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.value(v).len()],
        }
    }

    pub(crate) fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if self.check_finite && !value.all_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = op_inputs(&op).iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Propagates d(loss)/d(·) to every recorded value that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::StaleTape);
        }
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::NonScalarLoss {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        self.backward_done = true;
        self.grads = vec![None; self.nodes.len()];
        if !loss_node.requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                backprop(&self.nodes, i, &g, &mut self.grads);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul { a, b } | Op::Add { a, b } => vec![*a, *b],
        Op::BiasAdd { x, bias } => vec![*x, *bias],
        Op::Embedding { table, .. } => vec![*table],
        Op::Conv1d { x, kernel } | Op::Conv2d { x, kernel } => vec![*x, *kernel],
        Op::Concat { inputs, .. } => inputs.clone(),
        Op::Scale { x, .. }
        | Op::MaxPool { x, .. }
        | Op::Reshape { x }
        | Op::SelectRow { x, .. }
        | Op::Relu { x }
        | Op::Elu { x, .. }
        | Op::Sigmoid { x }
        | Op::Tanh { x }
        | Op::Dropout { x, .. }
        | Op::Sum { x }
        | Op::WeightedSum { x, .. } => vec![*x],
        Op::LstmCell { x, h, c, w_ih, w_hh, bias, .. } => vec![*x, *h, *c, *w_ih, *w_hh, *bias],
        Op::LstmScan { x, w_ih, w_hh, bias, .. } => vec![*x, *w_ih, *w_hh, *bias],
        Op::Bce { logits, .. } => vec![*logits],
    }
}

/// Mutable gradient buffer of `v`, allocated on first use. `None` when `v`
/// does not require a gradient.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let node = &nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]))
}

fn backprop(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    let val = |v: &Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul { a, b } => {
            let (av, bv) = (val(a), val(b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if let Some(da) = slot(nodes, grads, *a) {
                kernels::matmul_grad_lhs(g, bv.data(), da, m, k, n);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                kernels::matmul_grad_rhs(av.data(), g, db, m, k, n);
            }
        }
        Op::BiasAdd { x, bias } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                axpy(1.0, g, dx);
            }
            if let Some(db) = slot(nodes, grads, *bias) {
                let n = db.len();
                for row in g.chunks_exact(n) {
                    axpy(1.0, row, db);
                }
            }
        }
        Op::Add { a, b } => {
            if let Some(da) = slot(nodes, grads, *a) {
                axpy(1.0, g, da);
            }
            if let Some(db) = slot(nodes, grads, *b) {
                axpy(1.0, g, db);
            }
        }
        Op::Scale { x, factor } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                axpy(*factor, g, dx);
            }
        }
        Op::Embedding { table, ids } => {
            let width = val(table).shape()[1];
            if let Some(dt) = slot(nodes, grads, *table) {
                for (row, &id) in g.chunks_exact(width).zip(ids) {
                    axpy(1.0, row, &mut dt[id * width..(id + 1) * width]);
                }
            }
        }
        Op::Conv1d { x, kernel } => {
            let (xv, kv) = (val(x), val(kernel));
            let (len, c_in) = (xv.shape()[0], xv.shape()[1]);
            let (k, c_out) = (kv.shape()[0], kv.shape()[2]);
            if let Some(dk) = slot(nodes, grads, *kernel) {
                kernels::conv1d_grad_kernel(xv.data(), g, dk, len, c_in, k, c_out);
            }
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::conv1d_grad_input(kv.data(), g, dx, len, c_in, k, c_out);
            }
        }
        Op::Conv2d { x, kernel } => {
            let (xv, kv) = (val(x), val(kernel));
            let dims = kernels::Conv2dDims::new(xv.shape(), kv.shape());
            if let Some(dk) = slot(nodes, grads, *kernel) {
                kernels::conv2d_grad_kernel(xv.data(), g, dk, &dims);
            }
            if let Some(dx) = slot(nodes, grads, *x) {
                kernels::conv2d_grad_input(kv.data(), g, dx, &dims);
            }
        }
        Op::MaxPool { x, argmax } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for (&src, &gv) in argmax.iter().zip(g) {
                    dx[src] += gv;
                }
            }
        }
        Op::Concat { inputs, axis } => {
            let out_shape = node.value.shape();
            let outer: usize = out_shape[..*axis].iter().product();
            let out_chunk = node.value.len() / outer.max(1);
            let mut offset = 0;
            for input in inputs {
                let chunk = val(input).len() / outer.max(1);
                if let Some(dx) = slot(nodes, grads, *input) {
                    for o in 0..outer {
                        let src = &g[o * out_chunk + offset..o * out_chunk + offset + chunk];
                        axpy(1.0, src, &mut dx[o * chunk..(o + 1) * chunk]);
                    }
                }
                offset += chunk;
            }
        }
        Op::Reshape { x } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                axpy(1.0, g, dx);
            }
        }
        Op::SelectRow { x, row } => {
            let width = g.len();
            if let Some(dx) = slot(nodes, grads, *x) {
                axpy(1.0, g, &mut dx[row * width..(row + 1) * width]);
            }
        }
        Op::Relu { x } => {
            let out = node.value.data();
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, &gv), &o) in dx.iter_mut().zip(g).zip(out) {
                    if o > 0.0 {
                        *d += gv;
                    }
                }
            }
        }
        Op::Elu { x, alpha } => {
            let out = node.value.data();
            let input = val(x).data();
            if let Some(dx) = slot(nodes, grads, *x) {
                for (((d, &gv), &o), &xi) in dx.iter_mut().zip(g).zip(out).zip(input) {
                    *d += if xi > 0.0 { gv } else { gv * (o + alpha) };
                }
            }
        }
        Op::Sigmoid { x } => {
            let out = node.value.data();
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, &gv), &s) in dx.iter_mut().zip(g).zip(out) {
                    *d += gv * s * (1.0 - s);
                }
            }
        }
        Op::Tanh { x } => {
            let out = node.value.data();
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, &gv), &t) in dx.iter_mut().zip(g).zip(out) {
                    *d += gv * (1.0 - t * t);
                }
            }
        }
        Op::Dropout { x, mask } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for ((d, &gv), &m) in dx.iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            }
        }
        Op::Sum { x } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }
        }
        Op::WeightedSum { x, weights } => {
            if let Some(dx) = slot(nodes, grads, *x) {
                axpy(g[0], weights, dx);
            }
        }
        Op::LstmCell { x, h, c, w_ih, w_hh, bias, cache } => {
            let grads_in = lstm::cell_backward(
                g,
                cache,
                val(x).data(),
                val(h).data(),
                val(c).data(),
                val(w_ih).data(),
                val(w_hh).data(),
            );
            for (v, d) in [(x, &grads_in.dx), (h, &grads_in.dh), (c, &grads_in.dc)] {
                if let Some(dv) = slot(nodes, grads, *v) {
                    axpy(1.0, d, dv);
                }
            }
            for (v, d) in [(w_ih, &grads_in.dw_ih), (w_hh, &grads_in.dw_hh), (bias, &grads_in.dbias)] {
                if let Some(dv) = slot(nodes, grads, *v) {
                    axpy(1.0, d, dv);
                }
            }
        }
        Op::LstmScan { x, w_ih, w_hh, bias, cache } => {
            let grads_in = lstm::scan_backward(g, cache, val(x), val(w_ih).data(), val(w_hh).data());
            for (v, d) in [(x, &grads_in.dx), (w_ih, &grads_in.dw_ih), (w_hh, &grads_in.dw_hh), (bias, &grads_in.dbias)] {
                if let Some(dv) = slot(nodes, grads, *v) {
                    axpy(1.0, d, dv);
                }
            }
        }
        Op::Bce { logits, targets, weights, scale } => {
            let z = val(logits).data();
            if let Some(dz) = slot(nodes, grads, *logits) {
                for (((d, &zi), &t), &w) in dz.iter_mut().zip(z).zip(targets).zip(weights) {
                    *d += g[0] * scale * w * (kernels::sigmoid(zi) - t);
                }
            }
        }
    }
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
