//! Node homophily and total-heterophily diagnostics.

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, NodePartition};
use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;

/// Share of `v`'s neighbours that carry its label. Isolated nodes are an error.
pub fn node_homophily(g: &AttributedGraph, v: usize) -> Result<f64> {
    homophily_of(g.adjacency(), g.labels(), v)
}

fn homophily_of(adj: &SparseMatrix, labels: &[usize], v: usize) -> Result<f64> {
    let nb = adj.row_indices(v);
    if nb.is_empty() {
        return Err(Error::InvalidGraph(format!(
            "node {v} is isolated; homophily undefined"
        )));
    }
    let same = nb.iter().filter(|&&u| labels[u] == labels[v]).count();
    Ok(same as f64 / nb.len() as f64)
}

/// Homophily of every node under `adj` (which may be an augmented adjacency).
pub fn homophily_values(adj: &SparseMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    (0..adj.rows())
        .map(|v| homophily_of(adj, labels, v))
        .collect()
}

/// Empirical CDF as `(value, fraction ≤ value)` at each distinct value.
pub fn homophily_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    out
}

/// Evaluates a step CDF from [`homophily_cdf`] at `x` (right-continuous).
pub fn cdf_at(cdf: &[(f64, f64)], x: f64) -> f64 {
    let k = cdf.partition_point(|&(v, _)| v <= x);
    if k == 0 {
        0.0
    } else {
        cdf[k - 1].1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub per_node_homophily: Vec<f64>,
    pub head_total_het_count: usize,
    pub tail_total_het_count: usize,
    pub head_total_het_prop: f64,
    pub tail_total_het_prop: f64,
    pub head_cdf: Vec<(f64, f64)>,
    pub tail_cdf: Vec<(f64, f64)>,
    pub all_cdf: Vec<(f64, f64)>,
}

impl HomophilyReport {
    pub fn total_het_count(&self) -> usize {
        self.head_total_het_count + self.tail_total_het_count
    }
}

/// Total-heterophily counts and homophily CDFs for head and tail groups.
pub fn heterophily_report(
    g: &AttributedGraph,
    partition: &NodePartition,
) -> Result<HomophilyReport> {
    report_for(g.adjacency(), g.labels(), partition)
}

/// Same as [`heterophily_report`] over an arbitrary adjacency on the same nodes.
pub fn report_for(
    adj: &SparseMatrix,
    labels: &[usize],
    partition: &NodePartition,
) -> Result<HomophilyReport> {
    let h = homophily_values(adj, labels)?;
    let group = |ids: &[usize]| -> (usize, f64, Vec<(f64, f64)>) {
        let vals: Vec<f64> = ids.iter().map(|&v| h[v]).collect();
        let count = vals.iter().filter(|&&x| x == 0.0).count();
        let prop = if ids.is_empty() {
            0.0
        } else {
            count as f64 / ids.len() as f64
        };
        (count, prop, homophily_cdf(&vals))
    };
    let (hc, hp, head_cdf) = group(&partition.head_nodes);
    let (tc, tp, tail_cdf) = group(&partition.tail_nodes);
    Ok(HomophilyReport {
        all_cdf: homophily_cdf(&h),
        per_node_homophily: h,
        head_total_het_count: hc,
        tail_total_het_count: tc,
        head_total_het_prop: hp,
        tail_total_het_prop: tp,
        head_cdf,
        tail_cdf,
    })
}

/// `((c − 1)/c)^d`: chance that `d` uniformly labelled neighbours all
/// differ from a node's label among `c` classes.
pub fn expected_total_het_prob(c: usize, d: usize) -> Result<f64> {
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {c}"
        )));
    }
    Ok(((c - 1) as f64 / c as f64).powi(d as i32))
}
