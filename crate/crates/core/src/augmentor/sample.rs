//! Bernoulli sampling of new edges for tail nodes.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::dense::softmax_in_place;
use crate::numerics::{DenseMatrix, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Tail rows scored per block.
    pub batch_size: usize,
    /// Independent Bernoulli passes per row; results are unioned.
    pub rounds: usize,
    /// Inner products are divided by this before the softmax.
    pub temperature: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            batch_size: 512,
            rounds: 1,
            temperature: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedGraph {
    pub adjacency: SparseMatrix,
    /// New undirected edges as sorted `(min, max)` pairs.
    pub added_edges: Vec<(usize, usize)>,
}

/// For each tail node `i`, takes the softmax of `P2[i]·P2ᵀ / T` over all
/// nodes except `i` and its current neighbours, then keeps each candidate
/// `j` with that probability. Draws happen row by row, column by column, so
/// the result is a pure function of the generator state.
pub fn sample_augmented_edges(
    p2: &DenseMatrix,
    adj: &SparseMatrix,
    tail: &[usize],
    opts: &SampleOptions,
    rng: &mut impl Rng,
) -> Result<AugmentedGraph> {
    let n = adj.rows();
    if p2.rows() != n {
        return Err(Error::Shape(format!(
            "P2 has {} rows for {n} nodes",
            p2.rows()
        )));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    if !(opts.temperature > 0.0 && opts.temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {}",
            opts.temperature
        )));
    }
    let inv_t = 1.0 / opts.temperature;
    let mut added = BTreeSet::new();
    for batch in tail.chunks(opts.batch_size) {
        let mut scores = p2.select_rows(batch).matmul_t(p2)?;
        for (r, &i) in batch.iter().enumerate() {
            let row = scores.row_mut(r);
            for s in row.iter_mut() {
                *s *= inv_t;
            }
            row[i] = f64::NEG_INFINITY;
            for &j in adj.row_indices(i) {
                row[j] = f64::NEG_INFINITY;
            }
            softmax_in_place(row);
            for _ in 0..opts.rounds {
                for (j, &p) in row.iter().enumerate() {
                    if p > 0.0 && rng.random::<f64>() < p {
                        added.insert((i.min(j), i.max(j)));
                    }
                }
            }
        }
        scores.ensure_finite("edge sampling probabilities")?;
    }
    let added_edges: Vec<(usize, usize)> = added.into_iter().collect();
    let mut edges = adj.upper_edges();
    edges.extend_from_slice(&added_edges);
    Ok(AugmentedGraph {
        adjacency: SparseMatrix::adjacency_from_edges(n, &edges)?,
        added_edges,
    })
}
