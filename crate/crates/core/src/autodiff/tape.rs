//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a record holding its output and whatever the
//! backward rule needs. [`Tape::backward`] walks the records in exact reverse
//! creation order, so gradients are reproducible bit for bit.

use std::sync::Arc;

use rand::Rng;

use super::tensor::{matmul, matmul_nt, matmul_tn, SparseMatrix, Tensor};
use crate::error::{Error, Result};

pub const BATCH_NORM_EPS: f64 = 1e-5;

/// Handle to a value on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-column statistics normalizing a batch-norm input.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum NormMode {
    /// Normalize with the current batch's statistics.
    Batch,
    /// Normalize with fixed statistics.
    Frozen(NormStats),
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBroadcast(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SpMM(Arc<SparseMatrix>, Var),
    SegmentMax { x: Var, argmax: Vec<usize> },
    SegmentMean { x: Var, segments: Arc<Vec<usize>>, counts: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64>, batch: bool },
    Dropout { x: Var, mask: Vec<f64> },
    SoftmaxCe { logits: Var, probs: Tensor, labels: Vec<usize> },
    MeanEntropy { logits: Var, probs: Tensor, logp: Tensor, entropy: Vec<f64> },
    Sum(Var),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients from one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.grads[v.0].clone().unwrap_or_else(|| Tensor::zeros(self.shapes[v.0].clone()))
    }
}

fn softmax_rows(logits: &Tensor) -> (Tensor, Tensor) {
    let mut probs = logits.clone();
    let mut logp = logits.clone();
    for i in 0..logits.rows() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (j, &z) in row.iter().enumerate() {
            logp.row_mut(i)[j] = z - lse;
            probs.row_mut(i)[j] = (z - lse).exp();
        }
    }
    (probs, logp)
}

fn check_segments(segments: &[usize], n: usize, num_segments: usize) -> Result<Vec<usize>> {
    if segments.len() != n {
        return Err(Error::Shape(format!("{} segment ids for {n} rows", segments.len())));
    }
    if segments.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Shape("segment ids must be sorted non-decreasing".into()));
    }
    let mut counts = vec![0usize; num_segments];
    for &s in segments {
        if s >= num_segments {
            return Err(Error::Shape(format!("segment id {s} >= {num_segments}")));
        }
        counts[s] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Empty(format!("segment {empty}")));
    }
    Ok(counts)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, requires_grad: true, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, requires_grad: false, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Copies `v` into a new constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!("matmul {:?} x {:?}", ta.shape(), tb.shape())));
        }
        let out = matmul(ta, tb);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Adds a length-`h` vector to every row of an `n × h` matrix.
    pub fn add_broadcast(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.shape().len() != 2 || tb.len() != tx.cols() {
            return Err(Error::Shape(format!("add_broadcast {:?} + {:?}", tx.shape(), tb.shape())));
        }
        let mut out = tx.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBroadcast(x, bias), &[x, bias]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!("{what} {:?} vs {:?}", self.value(a).shape(), self.value(b).shape())));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= k);
        self.push(out, Op::Scale(x, k), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    /// `s · x` with `s` a constant sparse matrix.
    pub fn spmm(&mut self, s: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || s.cols() != tx.rows() {
            return Err(Error::Shape(format!("spmm {}x{} x {:?}", s.rows(), s.cols(), tx.shape())));
        }
        let out = s.matmul(tx);
        Ok(self.push(out, Op::SpMM(s, x), &[x]))
    }

    /// Per-segment, per-column maximum of an `n × h` matrix. Ties go to the
    /// lowest row index, which alone receives gradient.
    pub fn segment_max(&mut self, x: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let tx = self.value(x);
        check_segments(segments, tx.rows(), num_segments)?;
        let h = tx.cols();
        let mut argmax = vec![usize::MAX; num_segments * h];
        let mut out = Tensor::full(vec![num_segments, h], f64::NEG_INFINITY);
        for (i, &s) in segments.iter().enumerate() {
            for (j, &v) in tx.row(i).iter().enumerate() {
                let k = s * h + j;
                if argmax[k] == usize::MAX || v > out.data()[k] {
                    out.data_mut()[k] = v;
                    argmax[k] = i;
                }
            }
        }
        Ok(self.push(out, Op::SegmentMax { x, argmax }, &[x]))
    }

    pub fn segment_mean(&mut self, x: Var, segments: &[usize], num_segments: usize) -> Result<Var> {
        let tx = self.value(x);
        let counts = check_segments(segments, tx.rows(), num_segments)?;
        let h = tx.cols();
        let mut out = Tensor::zeros(vec![num_segments, h]);
        for (i, &s) in segments.iter().enumerate() {
            for (o, v) in out.row_mut(s).iter_mut().zip(tx.row(i)) {
                *o += v;
            }
        }
        for (s, &c) in counts.iter().enumerate() {
            out.row_mut(s).iter_mut().for_each(|v| *v /= c as f64);
        }
        let segments = Arc::new(segments.to_vec());
        Ok(self.push(out, Op::SegmentMean { x, segments, counts }, &[x]))
    }

    /// Column-wise batch normalization with affine `gamma`/`beta`.
    /// Returns the statistics used when normalizing with the batch's own.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, mode: NormMode) -> Result<(Var, Option<NormStats>)> {
        let tx = self.value(x);
        let (n, h) = (tx.rows(), tx.cols());
        if tx.shape().len() != 2 || self.value(gamma).len() != h || self.value(beta).len() != h {
            return Err(Error::Shape(format!(
                "batch_norm {:?} with gamma {:?} beta {:?}",
                tx.shape(),
                self.value(gamma).shape(),
                self.value(beta).shape()
            )));
        }
        if n == 0 {
            return Err(Error::Empty("batch for batch_norm".into()));
        }
        let (stats, batch) = match mode {
            NormMode::Batch => {
                let mut mean = vec![0.0; h];
                for i in 0..n {
                    for (m, v) in mean.iter_mut().zip(tx.row(i)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; h];
                for i in 0..n {
                    for ((s, v), m) in var.iter_mut().zip(tx.row(i)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (NormStats { mean, var }, true)
            }
            NormMode::Frozen(stats) => {
                if stats.mean.len() != h || stats.var.len() != h {
                    return Err(Error::Shape("frozen statistics width".into()));
                }
                (stats, false)
            }
        };
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt()).collect();
        let mut xhat = tx.clone();
        for i in 0..n {
            for (j, v) in xhat.row_mut(i).iter_mut().enumerate() {
                *v = (*v - stats.mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = xhat.clone();
        for i in 0..n {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * g[j] + b[j];
            }
        }
        let var = self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch }, &[x, gamma, beta]);
        Ok((var, batch.then_some(stats)))
    }

    /// Inverted dropout: zero with probability `p`, scale survivors by `1/(1-p)`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len()).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }, &[x]))
    }

    /// Mean softmax cross-entropy of `n × c` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 2 || labels.len() != t.rows() || t.rows() == 0 {
            return Err(Error::Shape(format!("{} labels for logits {:?}", labels.len(), t.shape())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= t.cols()) {
            return Err(Error::Shape(format!("label {bad} >= {} classes", t.cols())));
        }
        let (probs, logp) = softmax_rows(t);
        let loss = -labels.iter().enumerate().map(|(i, &y)| logp.row(i)[y]).sum::<f64>() / t.rows() as f64;
        let labels = labels.to_vec();
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits, probs, labels }, &[logits]))
    }

    /// Mean over rows of the softmax prediction entropy (nats).
    pub fn mean_entropy(&mut self, logits: Var) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 2 || t.rows() == 0 {
            return Err(Error::Shape(format!("mean_entropy of {:?}", t.shape())));
        }
        let (probs, logp) = softmax_rows(t);
        let entropy: Vec<f64> =
            (0..t.rows()).map(|i| -probs.row(i).iter().zip(logp.row(i)).map(|(p, l)| p * l).sum::<f64>()).collect();
        let mean = entropy.iter().sum::<f64>() / t.rows() as f64;
        Ok(self.push(Tensor::scalar(mean), Op::MeanEntropy { logits, probs, logp, entropy }, &[logits]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", self.value(loss).shape())));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), 1.0));
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, matmul_nt(g, self.value(*b)));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, matmul_tn(self.value(*a), g));
                }
            }
            Op::AddBroadcast(x, b) => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*b) {
                    let mut db = Tensor::zeros(self.value(*b).shape().to_vec());
                    for i in 0..g.rows() {
                        for (d, v) in db.data_mut().iter_mut().zip(g.row(i)) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if self.wants(this) {
                        let mut d = g.clone();
                        for (x, y) in d.data_mut().iter_mut().zip(self.value(other).data()) {
                            *x *= y;
                        }
                        self.accumulate(grads, this, d);
                    }
                }
            }
            Op::Scale(x, k) => {
                let mut d = g.clone();
                d.data_mut().iter_mut().for_each(|v| *v *= k);
                self.accumulate(grads, *x, d);
            }
            Op::Relu(x) => {
                let mut d = g.clone();
                for (dv, o) in d.data_mut().iter_mut().zip(out.data()) {
                    if *o <= 0.0 {
                        *dv = 0.0;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::SpMM(s, x) => {
                if self.wants(*x) {
                    self.accumulate(grads, *x, s.transpose().matmul(g));
                }
            }
            Op::SegmentMax { x, argmax } => {
                let tx = self.value(*x);
                let h = tx.cols();
                let mut d = Tensor::zeros(tx.shape().to_vec());
                for (k, &row) in argmax.iter().enumerate() {
                    d.data_mut()[row * h + k % h] += g.data()[k];
                }
                self.accumulate(grads, *x, d);
            }
            Op::SegmentMean { x, segments, counts } => {
                let tx = self.value(*x);
                let mut d = Tensor::zeros(tx.shape().to_vec());
                for (i, &s) in segments.iter().enumerate() {
                    let c = counts[s] as f64;
                    for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(s)) {
                        *dv = gv / c;
                    }
                }
                self.accumulate(grads, *x, d);
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch } => {
                let (n, h) = (g.rows(), g.cols());
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; h];
                let mut dbeta = vec![0.0; h];
                for i in 0..n {
                    for j in 0..h {
                        dgamma[j] += g.row(i)[j] * xhat.row(i)[j];
                        dbeta[j] += g.row(i)[j];
                    }
                }
                if self.wants(*x) {
                    let mut dx = Tensor::zeros(g.shape().to_vec());
                    let nf = n as f64;
                    for i in 0..n {
                        for j in 0..h {
                            let dxhat = g.row(i)[j] * gam[j];
                            dx.row_mut(i)[j] = if *batch {
                                // dgamma[j] = Σ dy·xhat, dbeta[j] = Σ dy
                                inv_std[j] / nf * (nf * dxhat - gam[j] * dbeta[j] - xhat.row(i)[j] * gam[j] * dgamma[j])
                            } else {
                                dxhat * inv_std[j]
                            };
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                let shape = self.value(*gamma).shape().to_vec();
                self.accumulate(grads, *gamma, Tensor::new(shape.clone(), dgamma).expect("gamma shape"));
                self.accumulate(
                    grads,
                    *beta,
                    Tensor::new(self.value(*beta).shape().to_vec(), dbeta).expect("beta shape"),
                );
            }
            Op::Dropout { x, mask } => {
                let mut d = g.clone();
                for (v, m) in d.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                self.accumulate(grads, *x, d);
            }
            Op::SoftmaxCe { logits, probs, labels } => {
                let scale = g.item() / labels.len() as f64;
                let mut d = probs.clone();
                for (i, &y) in labels.iter().enumerate() {
                    d.row_mut(i)[y] -= 1.0;
                }
                d.data_mut().iter_mut().for_each(|v| *v *= scale);
                self.accumulate(grads, *logits, d);
            }
            Op::MeanEntropy { logits, probs, logp, entropy } => {
                let scale = g.item() / entropy.len() as f64;
                let mut d = probs.clone();
                for (i, h) in entropy.iter().enumerate() {
                    for (dv, lp) in d.row_mut(i).iter_mut().zip(logp.row(i)) {
                        *dv = -*dv * (lp + h) * scale;
                    }
                }
                self.accumulate(grads, *logits, d);
            }
            Op::Sum(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, Tensor::full(shape, g.item()));
            }
        }
    }
}
