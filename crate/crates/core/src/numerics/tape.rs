//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every differentiable operation in execution order.
//! [`Tape::backward`] walks the record in exact reverse order and
//! accumulates gradients for every node that depends on a trainable leaf.
//! Sparse operands (adjacency, sparse features) are always constants.

use std::sync::Arc;

use super::dense::{dot, log_softmax_into, softmax_in_place, DenseMatrix};
use super::sparse::{spmm, spmm_transpose, SparseMatrix};
use crate::error::{Error, Result};

/// Probability clipping bound for the binary cross-entropy.
pub const PROB_CLIP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Spmm {
        a: Arc<SparseMatrix>,
        x: Var,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, DenseMatrix),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    SoftmaxRows(Var),
    /// `w ⊙ local + (1 − w) ⊙ graph` with `w` an N×1 column broadcast across features.
    Fuse {
        local: Var,
        graph: Var,
        weight: Var,
    },
    CrossEntropy {
        logits: Var,
        mask: Vec<usize>,
        /// softmax minus one-hot, already divided by |mask|
        grad: DenseMatrix,
    },
    InnerProductBce {
        emb: Var,
        grad: DenseMatrix,
    },
    KlGaussian {
        mu: Var,
        logvar: Var,
    },
    KlCategorical {
        logits: Var,
        grad: DenseMatrix,
    },
}

struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<DenseMatrix>>,
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

    /// Drops every recorded node and gradient. Parameter storage lives
    /// outside the tape and is never touched.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
    }

    fn push(&mut self, value: DenseMatrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf; gradients are accumulated for it.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the current value of `v` into a new constant, cutting the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    pub fn spmm(&mut self, a: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let value = spmm(a, self.value(x))?;
        let rg = self.needs(x);
        Ok(self.push(
            value,
            Op::Spmm {
                a: Arc::clone(a),
                x,
            },
            rg,
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Elementwise product with a constant matrix (dropout masks, noise).
    pub fn mul_const(&mut self, a: Var, c: DenseMatrix) -> Result<Var> {
        let value = self.value(a).zip_map(&c, |x, y| x * y)?;
        let rg = self.needs(a);
        Ok(self.push(value, Op::MulConst(a, c), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.needs(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.needs(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.needs(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        let rg = self.needs(a);
        self.push(value, Op::Exp(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        let rg = self.needs(a);
        self.push(value, Op::SoftmaxRows(a), rg)
    }

    /// Per-row convex combination `w ⊙ local + (1 − w) ⊙ graph`.
    pub fn fuse(&mut self, local: Var, graph: Var, weight: Var) -> Result<Var> {
        let (l, g, w) = (self.value(local), self.value(graph), self.value(weight));
        l.same_shape(g, "fuse")?;
        if w.shape() != (l.rows(), 1) {
            return Err(Error::Shape(format!(
                "fuse: weight is {}x{}, expected {}x1",
                w.rows(),
                w.cols(),
                l.rows()
            )));
        }
        let mut value = DenseMatrix::zeros(l.rows(), l.cols());
        for r in 0..l.rows() {
            let wr = w.get(r, 0);
            for ((o, &a), &b) in value.row_mut(r).iter_mut().zip(l.row(r)).zip(g.row(r)) {
                *o = wr * a + (1.0 - wr) * b;
            }
        }
        let rg = self.needs(local) || self.needs(graph) || self.needs(weight);
        Ok(self.push(
            value,
            Op::Fuse {
                local,
                graph,
                weight,
            },
            rg,
        ))
    }

    /// Mean over `mask` rows of `−log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[usize]) -> Result<Var> {
        if mask.is_empty() {
            return Err(Error::Empty("cross-entropy mask".into()));
        }
        let z = self.value(logits);
        if labels.len() != z.rows() {
            return Err(Error::Shape(format!(
                "cross-entropy: {} labels for {} rows",
                labels.len(),
                z.rows()
            )));
        }
        let inv = 1.0 / mask.len() as f64;
        let mut grad = DenseMatrix::zeros(z.rows(), z.cols());
        let mut logp = vec![0.0; z.cols()];
        let mut loss = 0.0;
        for &i in mask {
            let y = labels[i];
            if y >= z.cols() {
                return Err(Error::InvalidArgument(format!(
                    "label {y} of node {i} outside {} classes",
                    z.cols()
                )));
            }
            log_softmax_into(z.row(i), &mut logp);
            loss -= logp[y];
            let g = grad.row_mut(i);
            for (c, gc) in g.iter_mut().enumerate() {
                *gc += (logp[c].exp() - f64::from(u8::from(c == y))) * inv;
            }
        }
        let rg = self.needs(logits);
        Ok(self.push(
            DenseMatrix::scalar(loss * inv),
            Op::CrossEntropy {
                logits,
                mask: mask.to_vec(),
                grad,
            },
            rg,
        ))
    }

    /// Mean binary cross-entropy between `sigmoid(E Eᵀ)` and the binary
    /// `target` over all off-diagonal entries. Probabilities are clipped to
    /// `[PROB_CLIP, 1 − PROB_CLIP]`; clipped entries carry no gradient.
    ///
    /// Rows are streamed, so memory stays `O(N·d)`.
    pub fn inner_product_bce(&mut self, emb: Var, target: &SparseMatrix) -> Result<Var> {
        let e = self.value(emb);
        let n = e.rows();
        if target.rows() != target.cols() {
            return Err(Error::Shape(format!(
                "bce target must be square, got {}x{}",
                target.rows(),
                target.cols()
            )));
        }
        if target.rows() != n {
            return Err(Error::Shape(format!(
                "bce target is {n0}x{n0} but embeddings have {n} rows",
                n0 = target.rows()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(
                "bce needs at least two nodes".into(),
            ));
        }
        let count = (n * (n - 1)) as f64;
        let d = e.cols();
        let mut grad = DenseMatrix::zeros(n, d);
        let mut loss = 0.0;
        // a symmetric target lets every unordered pair stand in for both
        // of its entries
        let symmetric = target.is_symmetric();
        let weight = if symmetric { 2.0 } else { 1.0 };
        let mut acc = vec![0.0; d];
        for i in 0..n {
            let ei = e.row(i);
            let t_row = target.row_indices(i);
            let t_val = target.row_values(i);
            let first = if symmetric { i + 1 } else { 0 };
            let mut cursor = t_row.partition_point(|&c| c < first);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for j in first..n {
                let t = if cursor < t_row.len() && t_row[cursor] == j {
                    cursor += 1;
                    t_val[cursor - 1]
                } else {
                    0.0
                };
                if i == j {
                    continue;
                }
                let (l, dlds) = bce_entry(dot(ei, e.row(j)), t);
                loss += weight * l;
                if dlds != 0.0 {
                    let g = weight * dlds / count;
                    let ej = e.row(j);
                    for (a, &x) in acc.iter_mut().zip(ej) {
                        *a += g * x;
                    }
                    for (gj, &x) in grad.row_mut(j).iter_mut().zip(ei) {
                        *gj += g * x;
                    }
                }
            }
            for (gi, a) in grad.row_mut(i).iter_mut().zip(&acc) {
                *gi += a;
            }
        }
        let rg = self.needs(emb);
        Ok(self.push(
            DenseMatrix::scalar(loss / count),
            Op::InnerProductBce { emb, grad },
            rg,
        ))
    }

    /// `(1/N) Σ −½ (1 + logvar − μ² − exp(logvar))`, the KL divergence from
    /// `N(μ, exp(logvar))` to the standard normal, averaged over rows.
    pub fn kl_gaussian_standard(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let (m, lv) = (self.value(mu), self.value(logvar));
        m.same_shape(lv, "kl_gaussian_standard")?;
        let n = m.rows().max(1) as f64;
        let total: f64 = m
            .data()
            .iter()
            .zip(lv.data())
            .map(|(&u, &l)| -0.5 * (1.0 + l - u * u - l.exp()))
            .sum();
        let rg = self.needs(mu) || self.needs(logvar);
        Ok(self.push(
            DenseMatrix::scalar(total / n),
            Op::KlGaussian { mu, logvar },
            rg,
        ))
    }

    /// Row-mean of `KL(softmax(logits) ‖ softmax(prior))`. The prior is a
    /// constant; no gradient flows to it.
    pub fn kl_categorical_rows(&mut self, logits: Var, prior: &DenseMatrix) -> Result<Var> {
        let p = self.value(logits);
        p.same_shape(prior, "kl_categorical_rows")?;
        let (n, c) = p.shape();
        let inv = 1.0 / n.max(1) as f64;
        let mut grad = DenseMatrix::zeros(n, c);
        let mut logp = vec![0.0; c];
        let mut logq = vec![0.0; c];
        let mut loss = 0.0;
        for r in 0..n {
            log_softmax_into(p.row(r), &mut logp);
            log_softmax_into(prior.row(r), &mut logq);
            let mut row_kl = 0.0;
            for k in 0..c {
                row_kl += logp[k].exp() * (logp[k] - logq[k]);
            }
            loss += row_kl;
            let g = grad.row_mut(r);
            for k in 0..c {
                // ∂KL/∂z_k = p_k · (log p_k − log q_k − KL)
                g[k] = logp[k].exp() * (logp[k] - logq[k] - row_kl) * inv;
            }
        }
        let rg = self.needs(logits);
        Ok(self.push(
            DenseMatrix::scalar(loss * inv),
            Op::KlCategorical { logits, grad },
            rg,
        ))
    }

    /// Gradient accumulated for `v` by the last [`Tape::backward`], if any
    /// path reached it.
    pub fn grad(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Tape::grad`] but returns zeros when no gradient reached `v`.
    pub fn grad_or_zeros(&self, v: Var) -> DenseMatrix {
        self.grad(v).cloned().unwrap_or_else(|| {
            let (r, c) = self.value(v).shape();
            DenseMatrix::zeros(r, c)
        })
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(DenseMatrix::scalar(1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        // only keep gradients of trainable leaves
        for (idx, node) in self.nodes.iter().enumerate() {
            if !(matches!(node.op, Op::Leaf) && node.requires_grad) {
                grads[idx] = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(
        &self,
        idx: usize,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<()> {
        let node = &self.nodes[idx];
        let mut send = |v: Var, contribution: DenseMatrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Spmm { a, x } => send(*x, spmm_transpose(a, g)?),
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.matmul_t(self.value(*b))?);
                }
                if self.needs(*b) {
                    send(*b, self.value(*a).t_matmul(g)?);
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.zip_map(self.value(*b), |x, y| x * y)?);
                }
                if self.needs(*b) {
                    send(*b, g.zip_map(self.value(*a), |x, y| x * y)?);
                }
            }
            Op::MulConst(a, c) => send(*a, g.zip_map(c, |x, y| x * y)?),
            Op::Scale(a, s) => send(*a, g.scale(*s)),
            Op::Relu(a) => send(
                *a,
                g.zip_map(self.value(*a), |x, pre| if pre > 0.0 { x } else { 0.0 })?,
            ),
            Op::Sigmoid(a) => send(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y))?),
            Op::Exp(a) => send(*a, g.zip_map(&node.value, |x, y| x * y)?),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut out = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let inner = dot(g.row(r), y.row(r));
                    for ((o, &gv), &yv) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yv * (gv - inner);
                    }
                }
                send(*a, out);
            }
            Op::Fuse {
                local,
                graph,
                weight,
            } => {
                let w = self.value(*weight);
                let (l, gr) = (self.value(*local), self.value(*graph));
                if self.needs(*local) || self.needs(*graph) {
                    let mut gl = g.clone();
                    let mut gg = g.clone();
                    for r in 0..g.rows() {
                        let wr = w.get(r, 0);
                        gl.row_mut(r).iter_mut().for_each(|v| *v *= wr);
                        gg.row_mut(r).iter_mut().for_each(|v| *v *= 1.0 - wr);
                    }
                    send(*local, gl);
                    send(*graph, gg);
                }
                if self.needs(*weight) {
                    let mut gw = DenseMatrix::zeros(w.rows(), 1);
                    for r in 0..g.rows() {
                        let s: f64 = g
                            .row(r)
                            .iter()
                            .zip(l.row(r))
                            .zip(gr.row(r))
                            .map(|((&gv, &a), &b)| gv * (a - b))
                            .sum();
                        gw.set(r, 0, s);
                    }
                    send(*weight, gw);
                }
            }
            Op::CrossEntropy { logits, mask, grad } => {
                let up = g.item();
                let mut out = DenseMatrix::zeros(grad.rows(), grad.cols());
                for &i in mask {
                    for (o, &v) in out.row_mut(i).iter_mut().zip(grad.row(i)) {
                        *o = v * up;
                    }
                }
                send(*logits, out);
            }
            Op::InnerProductBce { emb, grad } => send(*emb, grad.scale(g.item())),
            Op::KlGaussian { mu, logvar } => {
                let up = g.item();
                let n = self.value(*mu).rows().max(1) as f64;
                if self.needs(*mu) {
                    send(*mu, self.value(*mu).scale(up / n));
                }
                if self.needs(*logvar) {
                    send(
                        *logvar,
                        self.value(*logvar).map(|l| 0.5 * (l.exp() - 1.0) * up / n),
                    );
                }
            }
            Op::KlCategorical { logits, grad } => send(*logits, grad.scale(g.item())),
        }
        Ok(())
    }
}

/// Loss and `∂loss/∂s` of one entry with score `s` and target `t`, using
/// `−t·ln p − (1 − t)·ln(1 − p) = softplus(s) − t·s` where it is unclipped.
#[inline]
fn bce_entry(s: f64, t: f64) -> (f64, f64) {
    let e = (-s.abs()).exp();
    let p = if s >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    if p < PROB_CLIP {
        (-t * PROB_CLIP.ln() - (1.0 - t) * (-PROB_CLIP).ln_1p(), 0.0)
    } else if p > 1.0 - PROB_CLIP {
        (-t * (-PROB_CLIP).ln_1p() - (1.0 - t) * PROB_CLIP.ln(), 0.0)
    } else {
        (s.max(0.0) + e.ln_1p() - t * s, p - t)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
