//! Pareto head/tail division by degree.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{degrees, AttributedGraph};

/// Share of nodes the tail must exceed.
pub const TAIL_FRACTION: f64 = 0.8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePartition {
    /// Sorted ids with degree ≤ threshold.
    pub tail_nodes: Vec<usize>,
    /// Sorted ids with degree > threshold.
    pub head_nodes: Vec<usize>,
    pub degree_threshold: usize,
}

impl NodePartition {
    /// Membership mask: `true` for tail nodes.
    pub fn tail_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.tail_nodes {
            m[v] = true;
        }
        m
    }
}

/// Walks distinct degrees upward and stops at the first degree where the
/// cumulative node count exceeds 80% of all nodes. Nodes at that degree are
/// tail nodes.
pub fn pareto_split(g: &AttributedGraph) -> NodePartition {
    let deg = degrees(g);
    let n = deg.len();
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &d in &deg {
        *hist.entry(d).or_default() += 1;
    }
    let limit = TAIL_FRACTION * n as f64;
    let mut cumulative = 0usize;
    let mut threshold = hist.keys().next_back().copied().unwrap_or(0);
    for (&d, &count) in &hist {
        cumulative += count;
        if cumulative as f64 > limit {
            threshold = d;
            break;
        }
    }
    let (tail_nodes, head_nodes) = (0..n).partition(|&v| deg[v] <= threshold);
    NodePartition {
        tail_nodes,
        head_nodes,
        degree_threshold: threshold,
    }
}
