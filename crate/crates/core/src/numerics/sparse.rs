//! Compressed sparse row storage and the sparse-dense kernels used for
//! feature diffusion.

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// CSR matrix with sorted column ids per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from raw CSR arrays, validating the layout.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 {
            return Err(Error::Shape("row offsets do not match row count".into()));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::Shape(
                "column ids, values and offsets disagree".into(),
            ));
        }
        for r in 0..rows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::Shape(format!("row offsets decrease at row {r}")));
            }
            let cols_r = &indices[indptr[r]..indptr[r + 1]];
            if cols_r.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape(format!(
                    "columns of row {r} are not strictly increasing"
                )));
            }
            if cols_r.last().is_some_and(|&c| c >= cols) {
                return Err(Error::Shape(format!("row {r} references column >= {cols}")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sparse value {v}")));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return Err(Error::Shape(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self::from_csr(rows, cols, indptr, indices, values)
    }

    /// Symmetric binary adjacency from undirected `(u, v)` pairs. Self-pairs
    /// and duplicates are ignored.
    pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Shape(format!("edge ({u}, {v}) outside {n} nodes")));
            }
            if u != v {
                neighbors[u].push(v);
                neighbors[v].push(u);
            }
        }
        Ok(Self::from_neighbor_lists(n, neighbors))
    }

    pub(crate) fn from_neighbor_lists(n: usize, mut neighbors: Vec<Vec<usize>>) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        for list in neighbors.iter_mut() {
            list.sort_unstable();
            list.dedup();
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        let values = vec![1.0; indices.len()];
        Self {
            rows: n,
            cols: n,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column ids of row `r`.
    #[inline]
    pub fn row_indices(&self, r: usize) -> &[usize] {
        &self.indices[self.indptr[r]..self.indptr[r + 1]]
    }

    #[inline]
    pub fn row_values(&self, r: usize) -> &[f64] {
        &self.values[self.indptr[r]..self.indptr[r + 1]]
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self.row_indices(r).binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.row_indices(r).binary_search(&c).is_ok()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row_values(r).iter().sum())
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (&c, &v) in self.row_indices(r).iter().zip(self.row_values(r)) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for (&c, &v) in self.row_indices(r).iter().zip(self.row_values(r)) {
                indices[next[c]] = r;
                values[next[c]] = v;
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            indptr,
            indices,
            values,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Undirected edge list `(u, v)` with `u < v`.
    pub fn upper_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nnz() / 2);
        for r in 0..self.rows {
            for &c in self.row_indices(r) {
                if r < c {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Induced submatrix on `keep` (new index `i` maps to old index `keep[i]`).
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut remap = vec![usize::MAX; self.rows.max(self.cols)];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_r, &old_r) in keep.iter().enumerate() {
            for (&c, &v) in self.row_indices(old_r).iter().zip(self.row_values(old_r)) {
                if remap[c] != usize::MAX {
                    triplets.push((new_r, remap[c], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &triplets)
            .expect("induced submatrix is well formed")
    }
}

/// Sparse-dense product `a · h`.
pub fn spmm(a: &SparseMatrix, h: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != h.rows() {
        return Err(Error::Shape(format!(
            "spmm: {}x{} · {}x{}",
            a.rows,
            a.cols,
            h.rows(),
            h.cols()
        )));
    }
    let width = h.cols();
    let mut out = DenseMatrix::zeros(a.rows, width);
    for r in 0..a.rows {
        let out_row = out.row_mut(r);
        for (&c, &v) in a.row_indices(r).iter().zip(a.row_values(r)) {
            for (o, &x) in out_row.iter_mut().zip(h.row(c)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · g` computed by scattering rows of `g`, without forming `aᵀ`.
pub fn spmm_transpose(a: &SparseMatrix, g: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows != g.rows() {
        return Err(Error::Shape(format!(
            "spmm_transpose: ({}x{})ᵀ · {}x{}",
            a.rows,
            a.cols,
            g.rows(),
            g.cols()
        )));
    }
    let mut out = DenseMatrix::zeros(a.cols, g.cols());
    for r in 0..a.rows {
        let g_row = g.row(r);
        for (&c, &v) in a.row_indices(r).iter().zip(a.row_values(r)) {
            for (o, &x) in out.row_mut(c).iter_mut().zip(g_row) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// `D̂^{-1/2} (A + I) D̂^{-1/2}` where `D̂` holds the row sums of `A + I`.
pub fn normalize_adjacency(a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "normalize_adjacency needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut indices = Vec::with_capacity(a.nnz() + n);
    let mut values = Vec::with_capacity(a.nnz() + n);
    let mut degree = Vec::with_capacity(n);
    for r in 0..n {
        let mut inserted = false;
        let mut deg = 0.0;
        for (&c, &v) in a.row_indices(r).iter().zip(a.row_values(r)) {
            if !inserted && c >= r {
                if c == r {
                    indices.push(r);
                    values.push(v + 1.0);
                    deg += v + 1.0;
                    inserted = true;
                    continue;
                }
                indices.push(r);
                values.push(1.0);
                deg += 1.0;
                inserted = true;
            }
            indices.push(c);
            values.push(v);
            deg += v;
        }
        if !inserted {
            indices.push(r);
            values.push(1.0);
            deg += 1.0;
        }
        degree.push(deg);
        indptr.push(indices.len());
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    for r in 0..n {
        for k in indptr[r]..indptr[r + 1] {
            values[k] *= inv_sqrt[r] * inv_sqrt[indices[k]];
        }
    }
    SparseMatrix::from_csr(n, n, indptr, indices, values)
}
