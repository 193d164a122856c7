//! Accuracy, weighted F1 and prediction export.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::dense::softmax_in_place;
use crate::numerics::DenseMatrix;

fn check(z: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<Vec<usize>> {
    if mask.is_empty() {
        return Err(Error::Empty("evaluation mask".into()));
    }
    if labels.len() != z.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            z.rows()
        )));
    }
    Ok(z.argmax_rows())
}

/// Share of `mask` nodes whose arg-max class equals the label.
pub fn accuracy(z: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let pred = check(z, labels, mask)?;
    let hits = mask.iter().filter(|&&v| pred[v] == labels[v]).count();
    Ok(hits as f64 / mask.len() as f64)
}

/// Per-class F1 averaged with weights equal to true-class support in `mask`.
pub fn weighted_f1(z: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    let pred = check(z, labels, mask)?;
    let c = z
        .cols()
        .max(labels.iter().copied().max().map_or(0, |m| m + 1));
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut support = vec![0usize; c];
    for &v in mask {
        support[labels[v]] += 1;
        if pred[v] == labels[v] {
            tp[pred[v]] += 1;
        } else {
            fp[pred[v]] += 1;
        }
    }
    let mut total = 0.0;
    for k in 0..c {
        let fn_ = support[k] - tp[k];
        let denom = 2 * tp[k] + fp[k] + fn_;
        let f1 = if denom == 0 {
            0.0
        } else {
            2.0 * tp[k] as f64 / denom as f64
        };
        total += f1 * support[k] as f64;
    }
    Ok(total / mask.len() as f64)
}

/// TSV of `node_id`, `predicted`, then one softmax probability per class.
pub fn write_predictions(path: &Path, z: &DenseMatrix, node_ids: &[usize]) -> Result<()> {
    let mut out = String::from("node_id\tpredicted");
    for k in 0..z.cols() {
        write!(out, "\tp{k}").expect("write to string");
    }
    out.push('\n');
    let pred = z.argmax_rows();
    let mut row = vec![0.0; z.cols()];
    for r in 0..z.rows() {
        row.copy_from_slice(z.row(r));
        softmax_in_place(&mut row);
        write!(out, "{}\t{}", node_ids[r], pred[r]).expect("write to string");
        for p in &row {
            write!(out, "\t{}", crate::fmt6(*p)).expect("write to string");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
