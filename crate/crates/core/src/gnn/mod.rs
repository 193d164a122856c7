//! GCN classifier and node-classification metrics.

mod metrics;

pub use metrics::{accuracy, weighted_f1, write_predictions};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::rng::{dropout_mask, glorot, RunRng};
use crate::numerics::{Checkpoint, DenseMatrix, Parameter, SparseMatrix, Tape, Var};

/// Classifier weights, `F → hidden → … → C`, no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnParams {
    pub layers: Vec<Parameter>,
}

impl GnnParams {
    pub fn init(
        n_features: usize,
        hidden: usize,
        n_layers: usize,
        n_classes: usize,
        rng: &mut RunRng,
    ) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::InvalidArgument(
                "gnn needs at least one layer".into(),
            ));
        }
        let mut dims = vec![n_features];
        dims.extend(vec![hidden; n_layers - 1]);
        dims.push(n_classes);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Parameter::new(format!("gnn.w{l}"), glorot(w[0], w[1], rng)))
            .collect();
        Ok(Self { layers })
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |p| p.shape().1)
    }

    pub fn n_features(&self) -> usize {
        self.layers.first().map_or(0, |p| p.shape().0)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut()
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> {
        self.layers.iter()
    }

    /// Records every weight as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.layers
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect()
    }

    pub fn save_into(&self, ckpt: &mut Checkpoint) {
        for p in &self.layers {
            ckpt.insert(p.name.clone(), p.value.clone());
        }
    }

    /// Restores values into `self`; names and shapes must match.
    pub fn load_from(&mut self, ckpt: &Checkpoint) -> Result<()> {
        for p in &mut self.layers {
            p.value = ckpt.take(&p.name, p.shape())?;
        }
        Ok(())
    }
}

/// Diffuse-then-transform layers, ReLU between layers, raw logits out.
/// `a` must already be normalised. The first layer multiplies the sparse
/// features by its weight before diffusing. Dropout, if given, applies to
/// hidden activations.
pub fn gcn_forward_tape(
    tape: &mut Tape,
    a: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    weights: &[Var],
    mut dropout: Option<(f64, &mut RunRng)>,
) -> Result<Var> {
    let Some((&first, rest)) = weights.split_first() else {
        return Err(Error::InvalidArgument("gnn has no layers".into()));
    };
    let mut h = tape.spmm(x, first)?;
    h = tape.spmm(a, h)?;
    for &w in rest {
        h = tape.relu(h);
        if let Some((p, rng)) = dropout.as_mut() {
            if *p > 0.0 {
                let (r, c) = tape.value(h).shape();
                h = tape.mul_const(h, dropout_mask(r, c, *p, *rng))?;
            }
        }
        h = tape.matmul(h, w)?;
        h = tape.spmm(a, h)?;
    }
    Ok(h)
}

/// Inference-mode logits.
pub fn gcn_forward(
    a: &Arc<SparseMatrix>,
    x: &Arc<SparseMatrix>,
    params: &GnnParams,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let ws: Vec<Var> = params
        .layers
        .iter()
        .map(|p| tape.constant(p.value.clone()))
        .collect();
    let z = gcn_forward_tape(&mut tape, a, x, &ws, None)?;
    let out = tape.value(z).clone();
    out.ensure_finite("gcn logits")?;
    Ok(out)
}

/// Mean cross-entropy of logits over the training nodes.
pub fn loss_sup(tape: &mut Tape, z: Var, labels: &[usize], train: &[usize]) -> Result<Var> {
    tape.cross_entropy(z, labels, train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normalize_adjacency;
    use crate::numerics::rng::stream_rng;
    use approx::assert_abs_diff_eq;

    fn params(ws: Vec<DenseMatrix>) -> GnnParams {
        GnnParams {
            layers: ws
                .into_iter()
                .enumerate()
                .map(|(i, w)| Parameter::new(format!("gnn.w{i}"), w))
                .collect(),
        }
    }

    #[test]
    fn single_node_identity_weight() {
        let a = Arc::new(normalize_adjacency(&SparseMatrix::zeros(1, 1)).unwrap());
        let x = Arc::new(SparseMatrix::from_triplets(1, 2, &[(0, 0, 0.3), (0, 1, -0.7)]).unwrap());
        let z = gcn_forward(&a, &x, &params(vec![DenseMatrix::identity(2)])).unwrap();
        assert_eq!(z.data(), &[0.3, -0.7]);
    }

    #[test]
    fn zero_features_give_zero_logits() {
        let a = Arc::new(
            normalize_adjacency(&SparseMatrix::adjacency_from_edges(3, &[(0, 1)]).unwrap())
                .unwrap(),
        );
        let x = Arc::new(SparseMatrix::zeros(3, 4));
        let p = GnnParams::init(4, 5, 2, 3, &mut stream_rng(0, 1)).unwrap();
        let z = gcn_forward(&a, &x, &p).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn triangle_two_layers_vs_scalar_oracle() {
        // Ã on a triangle is 1/3 everywhere, so every row of Ã·M is the column mean of M
        let adj = SparseMatrix::adjacency_from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let a = Arc::new(normalize_adjacency(&adj).unwrap());
        let x = Arc::new(
            SparseMatrix::from_triplets(3, 1, &[(0, 0, 1.0), (1, 0, 2.0), (2, 0, 6.0)]).unwrap(),
        );
        let w0 = DenseMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let w1 = DenseMatrix::from_rows(&[vec![2.0], vec![5.0]]).unwrap();
        let z = gcn_forward(&a, &x, &params(vec![w0, w1])).unwrap();
        // mean x = 3 → hidden (3, −3) → relu (3, 0) → 3·2 = 6, diffused mean stays 6
        for r in 0..3 {
            assert_abs_diff_eq!(z.get(r, 0), 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn init_shapes_chain() {
        let p = GnnParams::init(10, 8, 3, 4, &mut stream_rng(1, 1)).unwrap();
        let shapes: Vec<_> = p.params().map(Parameter::shape).collect();
        assert_eq!(shapes, vec![(10, 8), (8, 8), (8, 4)]);
        assert_eq!((p.n_features(), p.n_classes()), (10, 4));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = GnnParams::init(3, 4, 2, 2, &mut stream_rng(2, 1)).unwrap();
        let mut c = Checkpoint::new();
        p.save_into(&mut c);
        let mut q = GnnParams::init(3, 4, 2, 2, &mut stream_rng(9, 1)).unwrap();
        q.load_from(&c).unwrap();
        assert_eq!(p, q);
        let mut wrong = GnnParams::init(3, 5, 2, 2, &mut stream_rng(9, 1)).unwrap();
        assert!(wrong.load_from(&c).is_err());
    }
}
