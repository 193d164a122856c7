//! Forged tail nodes: head nodes with part of their edges hidden.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodePartition};
use crate::numerics::rng::{stream, stream_rng, RunRng};
use crate::numerics::SparseMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ForgedGraph {
    pub adjacency: SparseMatrix,
    /// Removed undirected edges as `(min, max)`, in removal order.
    pub dropped_edges: Vec<(usize, usize)>,
    /// Drops that could not be made without isolating a head node.
    pub shortfall: usize,
}

/// Attempts made before settling for the draw with the smallest shortfall.
const MAX_ATTEMPTS: usize = 64;

/// Visits head nodes in ascending id and drops `floor(delta · deg(v))` of
/// each one's remaining edges, chosen uniformly. `deg` is the degree in the
/// original graph. An edge is never dropped if that would leave either
/// endpoint without edges, or leave a head visited later unable to meet its
/// own quota. A draw that misses some quota is redrawn from the same stream
/// up to 64 times; what remains unmet is reported as
/// `shortfall`.
pub fn forge_tails(
    g: &AttributedGraph,
    partition: &NodePartition,
    delta: f64,
    seed: u64,
) -> Result<ForgedGraph> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "forge fraction must lie in [0, 1), got {delta}"
        )));
    }
    let mut rng = stream_rng(seed, stream::FORGE);
    let mut best = forge_once(g, partition, delta, &mut rng);
    for _ in 1..MAX_ATTEMPTS {
        if best.shortfall == 0 {
            break;
        }
        let next = forge_once(g, partition, delta, &mut rng);
        if next.shortfall < best.shortfall {
            best = next;
        }
    }
    Ok(best)
}

fn forge_once(
    g: &AttributedGraph,
    partition: &NodePartition,
    delta: f64,
    rng: &mut RunRng,
) -> ForgedGraph {
    let n = g.n_nodes();
    let quota_of = |v: usize| (delta * g.degree(v) as f64).floor() as usize;
    // edges each node must keep: one, plus the quota of heads not yet visited
    let mut reserve = vec![1usize; n];
    for &v in &partition.head_nodes {
        reserve[v] += quota_of(v);
    }
    let mut nbrs: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v).to_vec()).collect();
    let mut dropped = Vec::new();
    let mut shortfall = 0;
    for &v in &partition.head_nodes {
        let quota = quota_of(v);
        reserve[v] = 1;
        if quota == 0 {
            continue;
        }
        let eligible: Vec<usize> = nbrs[v]
            .iter()
            .copied()
            .filter(|&u| nbrs[u].len() > reserve[u])
            .collect();
        let k = quota
            .min(eligible.len())
            .min(nbrs[v].len().saturating_sub(1));
        shortfall += quota - k;
        let mut picked: Vec<usize> = sample(rng, eligible.len(), k)
            .into_iter()
            .map(|i| eligible[i])
            .collect();
        picked.sort_unstable();
        for u in picked {
            nbrs[v].retain(|&w| w != u);
            nbrs[u].retain(|&w| w != v);
            dropped.push((v.min(u), v.max(u)));
        }
    }
    ForgedGraph {
        adjacency: SparseMatrix::from_neighbor_lists(n, nbrs),
        dropped_edges: dropped,
        shortfall,
    }
}
