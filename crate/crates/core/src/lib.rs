//! Tail-node structure augmentation for graph neural networks.
//!
//! A variational graph encoder learns to add likely same-class edges to
//! low-degree ("tail") nodes while a GCN classifier trains on the augmented
//! graph. The crate also ships the degree and homophily diagnostics used
//! to motivate that augmentation.

pub mod augmentor;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
pub use numerics::{DenseMatrix, SparseMatrix};

/// Formats a number with 6 significant digits for TSV output.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}
