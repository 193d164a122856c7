//! Attributed graphs, bundle IO, preprocessing and degree/homophily diagnostics.

mod homophily;
mod io;
mod partition;
mod preprocess;
mod split;

pub use homophily::{
    cdf_at, expected_total_het_prob, heterophily_report, homophily_cdf, homophily_values,
    node_homophily, report_for, HomophilyReport,
};
pub use io::{load_graph, load_masks, write_edges, MaskRole, NodeMasks};
pub use partition::{pareto_split, NodePartition, TAIL_FRACTION};
pub use preprocess::{largest_component, preprocess};
pub use split::{make_splits, DatasetSplit, SplitMode};

use crate::error::{Error, Result};
use crate::numerics::SparseMatrix;

/// Undirected, unweighted graph with node features and class labels.
///
/// Features are kept in CSR form; benchmark feature matrices are bag-of-words
/// and mostly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributedGraph {
    adjacency: SparseMatrix,
    features: SparseMatrix,
    labels: Vec<usize>,
    n_classes: usize,
    original_ids: Vec<usize>,
}

impl AttributedGraph {
    /// Validates and builds a graph whose node ids are their own original ids.
    pub fn new(
        adjacency: SparseMatrix,
        features: SparseMatrix,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        Self::with_original_ids(adjacency, features, labels, n_classes, (0..n).collect())
    }

    pub fn with_original_ids(
        adjacency: SparseMatrix,
        features: SparseMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        original_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = labels.len();
        if adjacency.rows() != n || adjacency.cols() != n {
            return Err(Error::InvalidGraph(format!(
                "adjacency is {}x{} for {n} labelled nodes",
                adjacency.rows(),
                adjacency.cols()
            )));
        }
        if features.rows() != n {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {n} nodes",
                features.rows()
            )));
        }
        if original_ids.len() != n {
            return Err(Error::InvalidGraph(
                "original id map has wrong length".into(),
            ));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::InvalidGraph("adjacency is not symmetric".into()));
        }
        for r in 0..n {
            if adjacency.contains(r, r) {
                return Err(Error::InvalidGraph(format!("self-loop on node {r}")));
            }
            if adjacency.row_values(r).iter().any(|&v| v != 1.0) {
                return Err(Error::InvalidGraph(format!(
                    "non-binary adjacency entry in row {r}"
                )));
            }
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::InvalidGraph(format!(
                "label {y} of node {v} outside {n_classes} classes"
            )));
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            n_classes,
            original_ids,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> &SparseMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Node id in the loaded bundle for every current node.
    pub fn original_ids(&self) -> &[usize] {
        &self.original_ids
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row_indices(v)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row_nnz(v)
    }

    /// Induced subgraph on `keep` (sorted), relabelled to `0..keep.len()`.
    pub fn induced(&self, keep: &[usize]) -> Self {
        Self {
            adjacency: self.adjacency.induced(keep),
            features: select_rows(&self.features, keep),
            labels: keep.iter().map(|&v| self.labels[v]).collect(),
            n_classes: self.n_classes,
            original_ids: keep.iter().map(|&v| self.original_ids[v]).collect(),
        }
    }
}

/// Degree of every node.
pub fn degrees(g: &AttributedGraph) -> Vec<usize> {
    (0..g.n_nodes()).map(|v| g.degree(v)).collect()
}

fn select_rows(m: &SparseMatrix, rows: &[usize]) -> SparseMatrix {
    let mut indptr = Vec::with_capacity(rows.len() + 1);
    indptr.push(0);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for &r in rows {
        indices.extend_from_slice(m.row_indices(r));
        values.extend_from_slice(m.row_values(r));
        indptr.push(indices.len());
    }
    SparseMatrix::from_csr(rows.len(), m.cols(), indptr, indices, values)
        .expect("row selection is well formed")
}
