//! Tail-structure augmentor.
//!
//! The same weights θ drive three encoders: a variational graph encoder on
//! the forged graph, a mean-only graph encoder on the full graph, and a
//! linear encoder that skips message passing. A learned per-node weight
//! mixes the last two into `P2`, whose inner products decide which edges get
//! added to tail nodes.

mod forge;
mod sample;

pub use forge::{forge_tails, ForgedGraph};
pub use sample::{sample_augmented_edges, AugmentedGraph, SampleOptions};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::rng::{gaussian, glorot, RunRng};
use crate::numerics::{Checkpoint, DenseMatrix, Parameter, SparseMatrix, Tape, Var};

/// Trainable augmentor state. `eps_raw` is stored before the sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentorParams {
    pub layers: Vec<Parameter>,
    pub mu_head: Parameter,
    pub logvar_head: Parameter,
    pub eps_raw: Parameter,
}

/// Tape handles for [`AugmentorParams`].
#[derive(Clone, Debug)]
pub struct AugmentorVars {
    pub layers: Vec<Var>,
    pub mu_head: Var,
    pub logvar_head: Var,
    pub eps_raw: Var,
}

impl AugmentorParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        n_nodes: usize,
        n_features: usize,
        hidden: usize,
        n_layers: usize,
        n_classes: usize,
        eps_init: f64,
        rng: &mut RunRng,
    ) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::InvalidArgument(
                "encoder needs at least one layer".into(),
            ));
        }
        let mut dims = vec![n_features];
        dims.extend(vec![hidden; n_layers]);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Parameter::new(format!("aug.w{l}"), glorot(w[0], w[1], rng)))
            .collect();
        Ok(Self {
            layers,
            mu_head: Parameter::new("aug.mu", glorot(hidden, n_classes, rng)),
            logvar_head: Parameter::new("aug.logvar", glorot(hidden, n_classes, rng)),
            eps_raw: Parameter::new("aug.eps_raw", DenseMatrix::filled(n_nodes, 1, eps_init)),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.eps_raw.shape().0
    }

    pub fn latent_dim(&self) -> usize {
        self.mu_head.shape().1
    }

    /// Mixing weight `sigmoid(eps_raw)` per node.
    pub fn eps(&self) -> Vec<f64> {
        self.eps_raw
            .value
            .data()
            .iter()
            .map(|&r| crate::numerics::sigmoid(r))
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers
            .iter()
            .chain([&self.mu_head, &self.logvar_head, &self.eps_raw])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers
            .iter_mut()
            .chain([&mut self.mu_head, &mut self.logvar_head, &mut self.eps_raw])
    }

    pub fn bind(&self, tape: &mut Tape) -> AugmentorVars {
        AugmentorVars {
            layers: self
                .layers
                .iter()
                .map(|p| tape.leaf(p.value.clone()))
                .collect(),
            mu_head: tape.leaf(self.mu_head.value.clone()),
            logvar_head: tape.leaf(self.logvar_head.value.clone()),
            eps_raw: tape.leaf(self.eps_raw.value.clone()),
        }
    }

    /// Same as [`AugmentorParams::bind`] with non-trainable leaves.
    pub fn bind_constant(&self, tape: &mut Tape) -> AugmentorVars {
        AugmentorVars {
            layers: self
                .layers
                .iter()
                .map(|p| tape.constant(p.value.clone()))
                .collect(),
            mu_head: tape.constant(self.mu_head.value.clone()),
            logvar_head: tape.constant(self.logvar_head.value.clone()),
            eps_raw: tape.constant(self.eps_raw.value.clone()),
        }
    }

    /// Copies tape gradients back into the parameters.
    pub fn collect_grads(&mut self, tape: &Tape, vars: &AugmentorVars) -> Result<()> {
        let handles = vars
            .layers
            .iter()
            .chain([&vars.mu_head, &vars.logvar_head, &vars.eps_raw]);
        for (p, &v) in self.params_mut().zip(handles) {
            p.set_grad(tape.grad_or_zeros(v))?;
        }
        Ok(())
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        for p in self.params() {
            ckpt.insert(p.name.clone(), p.value.clone());
        }
    }

    pub fn load_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for p in self.params_mut() {
            p.value = ckpt.take(&p.name, p.shape())?;
        }
        Ok(())
    }
}

/// How the variational encoder produces its output.
#[derive(Clone, Debug, PartialEq)]
pub enum Noise {
    /// `μ + exp(½·logvar) ⊙ noise` with the given standard-normal draws.
    Sample(DenseMatrix),
    /// `μ` only.
    MeanOnly,
}

impl Noise {
    pub fn draw(rows: usize, cols: usize, rng: &mut RunRng) -> Self {
        Self::Sample(gaussian(rows, cols, rng))
    }
}

/// Tape handles of one encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    pub p: Var,
    pub mu: Var,
    pub logvar: Var,
}

/// ReLU layer stack. With `adj = None` no message passing happens.
fn hidden_stack(
    tape: &mut Tape,
    adj: Option<&Arc<SparseMatrix>>,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
) -> Result<Var> {
    let Some((&first, rest)) = vars.layers.split_first() else {
        return Err(Error::InvalidArgument("encoder has no layers".into()));
    };
    let mut h = tape.spmm(x, first)?;
    if let Some(a) = adj {
        h = tape.spmm(a, h)?;
    }
    h = tape.relu(h);
    for &w in rest {
        h = tape.matmul(h, w)?;
        if let Some(a) = adj {
            h = tape.spmm(a, h)?;
        }
        h = tape.relu(h);
    }
    Ok(h)
}

/// Variational graph encoder on the normalised adjacency `adj`.
pub fn vgcn_encode_tape(
    tape: &mut Tape,
    adj: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
    noise: &Noise,
) -> Result<Encoded> {
    let h = hidden_stack(tape, Some(adj), x, vars)?;
    let mu = tape.matmul(h, vars.mu_head)?;
    let logvar = tape.matmul(h, vars.logvar_head)?;
    let p = match noise {
        Noise::MeanOnly => mu,
        Noise::Sample(eps) => {
            let half = tape.scale(logvar, 0.5);
            let sigma = tape.exp(half);
            let jitter = tape.mul_const(sigma, eps.clone())?;
            tape.add(mu, jitter)?
        }
    };
    Ok(Encoded { p, mu, logvar })
}

/// Layer stack and μ head without any adjacency.
pub fn linear_encode_tape(
    tape: &mut Tape,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
) -> Result<Var> {
    let h = hidden_stack(tape, None, x, vars)?;
    tape.matmul(h, vars.mu_head)
}

/// `P2 = ε ⊙ P_l + (1 − ε) ⊙ P_g` with `ε = sigmoid(eps_raw)`.
pub fn fuse_tape(tape: &mut Tape, p_l: Var, p_g: Var, eps_raw: Var) -> Result<Var> {
    let eps = tape.sigmoid(eps_raw);
    tape.fuse(p_l, p_g, eps)
}

/// `BCE(sigmoid(P1 P1ᵀ), A) + KL(q(P1) ‖ N(0, I))` with `P1` encoded on the
/// normalised forged adjacency `a1`.
pub fn loss_aug_tape(
    tape: &mut Tape,
    a1: &Arc<SparseMatrix>,
    target: &SparseMatrix,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
    noise: &Noise,
) -> Result<Var> {
    let e = vgcn_encode_tape(tape, a1, x, vars, noise)?;
    let bce = tape.inner_product_bce(e.p, target)?;
    let kl = tape.kl_gaussian_standard(e.mu, e.logvar)?;
    tape.add(bce, kl)
}

/// Returns `(L_p, P2)`: cross-entropy of the fused representation on the
/// training nodes.
pub fn loss_p_tape(
    tape: &mut Tape,
    a: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
    labels: &[usize],
    train: &[usize],
) -> Result<(Var, Var)> {
    let p_g = vgcn_encode_tape(tape, a, x, vars, &Noise::MeanOnly)?.p;
    let p_l = linear_encode_tape(tape, x, vars)?;
    let p2 = fuse_tape(tape, p_l, p_g, vars.eps_raw)?;
    let loss = tape.cross_entropy(p2, labels, train)?;
    Ok((loss, p2))
}

/// `KL(softmax Z1 ‖ softmax Z2)` with `Z1` encoded on the normalised
/// augmented adjacency `a2`. `z2_prior` is a constant.
pub fn loss_ali_tape(
    tape: &mut Tape,
    a2: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    vars: &AugmentorVars,
    z2_prior: &DenseMatrix,
    noise: &Noise,
) -> Result<Var> {
    let z1 = vgcn_encode_tape(tape, a2, x, vars, noise)?.p;
    tape.kl_categorical_rows(z1, z2_prior)
}

/// Plain-value encoder outputs `(P, μ, σ)`.
pub fn vgcn_encode(
    adj: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    params: &AugmentorParams,
    noise: &Noise,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    let mut tape = Tape::new();
    let vars = params.bind_constant(&mut tape);
    let e = vgcn_encode_tape(&mut tape, adj, x, &vars, noise)?;
    let sigma = tape.value(e.logvar).map(|l| (0.5 * l).exp());
    Ok((tape.value(e.p).clone(), tape.value(e.mu).clone(), sigma))
}

pub fn linear_encode(x: &Arc<SparseMatrix>, params: &AugmentorParams) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let vars = params.bind_constant(&mut tape);
    let p = linear_encode_tape(&mut tape, x, &vars)?;
    Ok(tape.value(p).clone())
}

/// Per-row convex combination with weights `eps` given directly in `[0, 1]`.
pub fn fuse(p_l: &DenseMatrix, p_g: &DenseMatrix, eps: &[f64]) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let l = tape.constant(p_l.clone());
    let g = tape.constant(p_g.clone());
    let w = tape.constant(DenseMatrix::column(eps));
    let out = tape.fuse(l, g, w)?;
    Ok(tape.value(out).clone())
}

/// Inference-mode `P2` on the normalised full adjacency.
pub fn compute_p2(
    a: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    params: &AugmentorParams,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let vars = params.bind_constant(&mut tape);
    let p_g = vgcn_encode_tape(&mut tape, a, x, &vars, &Noise::MeanOnly)?.p;
    let p_l = linear_encode_tape(&mut tape, x, &vars)?;
    let p2 = fuse_tape(&mut tape, p_l, p_g, vars.eps_raw)?;
    let out = tape.value(p2).clone();
    out.ensure_finite("P2")?;
    Ok(out)
}
