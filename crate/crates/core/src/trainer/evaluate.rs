//! Test metrics, experiment runner and one-dimensional sweeps.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::{snapshot_logits, train_with, Context, EpochLog, Snapshot, TrainOutput};
use crate::error::{Error, Result};
use crate::gnn::{accuracy, weighted_f1};
use crate::graph::{make_splits, AttributedGraph, DatasetSplit, NodeMasks, NodePartition};
use crate::numerics::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub best_epoch: usize,
    pub valid_accuracy: f64,
    pub test_accuracy: f64,
    pub test_weighted_f1: f64,
    /// Accuracy on test nodes above the degree threshold, if any.
    pub test_head_accuracy: Option<f64>,
    /// Accuracy on test nodes at or below the degree threshold, if any.
    pub test_tail_accuracy: Option<f64>,
}

/// Rebuilds the snapshot's classifier graph and scores it.
pub fn evaluate(
    g: &AttributedGraph,
    partition: &NodePartition,
    split: &DatasetSplit,
    config: &TrainConfig,
    snapshot: &Snapshot,
) -> Result<Metrics> {
    let ctx = Context::new(g, partition, split, config)?;
    check_shapes(g, snapshot)?;
    let (z, _) = snapshot_logits(&ctx, snapshot)?;
    metrics_from_logits(&z, g, partition, split, snapshot.epoch)
}

fn check_shapes(g: &AttributedGraph, snap: &Snapshot) -> Result<()> {
    if snap.gnn.n_features() != g.n_features() || snap.gnn.n_classes() != g.n_classes() {
        return Err(Error::Shape(format!(
            "classifier expects {} features and {} classes, graph has {} and {}",
            snap.gnn.n_features(),
            snap.gnn.n_classes(),
            g.n_features(),
            g.n_classes()
        )));
    }
    if let Some(a) = &snap.augmentor {
        if a.n_nodes() != g.n_nodes() {
            return Err(Error::Shape(format!(
                "augmentor holds {} nodes, graph has {}",
                a.n_nodes(),
                g.n_nodes()
            )));
        }
    }
    Ok(())
}

pub fn metrics_from_logits(
    z: &DenseMatrix,
    g: &AttributedGraph,
    partition: &NodePartition,
    split: &DatasetSplit,
    best_epoch: usize,
) -> Result<Metrics> {
    let labels = g.labels();
    let tail = partition.tail_mask(g.n_nodes());
    let (test_tail, test_head): (Vec<usize>, Vec<usize>) =
        split.test.iter().partition(|&&v| tail[v]);
    let opt_acc = |mask: &[usize]| -> Result<Option<f64>> {
        if mask.is_empty() {
            Ok(None)
        } else {
            accuracy(z, labels, mask).map(Some)
        }
    };
    Ok(Metrics {
        best_epoch,
        valid_accuracy: accuracy(z, labels, &split.valid)?,
        test_accuracy: accuracy(z, labels, &split.test)?,
        test_weighted_f1: weighted_f1(z, labels, &split.test)?,
        test_head_accuracy: opt_acc(&test_head)?,
        test_tail_accuracy: opt_acc(&test_tail)?,
    })
}

/// Result of one seeded run.
pub struct RunResult {
    pub split: DatasetSplit,
    pub output: TrainOutput,
    pub metrics: Metrics,
}

/// Split with the config seed, train, then evaluate the best snapshot.
pub fn run_experiment(
    g: &AttributedGraph,
    partition: &NodePartition,
    masks: Option<&NodeMasks>,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RunResult> {
    let split = make_splits(g, partition, config.split, config.seed, masks)?;
    let output = train_with(g, partition, &split, config, on_epoch)?;
    let metrics = evaluate(g, partition, &split, config, &output.best)?;
    Ok(RunResult {
        split,
        output,
        metrics,
    })
}

/// `k` points evenly spaced in log scale from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, k: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > 0.0) || k == 0 {
        return Err(Error::InvalidArgument(
            "log grid needs positive bounds and k ≥ 1".into(),
        ));
    }
    if k == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..k)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (k - 1) as f64))
        .collect())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: String,
    pub value: String,
    pub seeds: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub mean_test_weighted_f1: f64,
    pub std_test_weighted_f1: f64,
}

/// Trains every `(value, seed)` cell with `key` overridden and aggregates
/// test metrics per value.
pub fn sweep(
    g: &AttributedGraph,
    partition: &NodePartition,
    masks: Option<&NodeMasks>,
    base: &TrainConfig,
    key: &str,
    values: &[String],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    if seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one seed".into(),
        ));
    }
    let mut rows = Vec::with_capacity(values.len());
    for value in values {
        let mut acc = Vec::new();
        let mut f1 = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.set(key, value)?;
            cfg.seed = seed;
            cfg.validate()?;
            let r = run_experiment(g, partition, masks, &cfg, |_| {})?;
            log::info!(
                "sweep {key}={value} seed={seed}: test acc {:.4}",
                r.metrics.test_accuracy
            );
            acc.push(r.metrics.test_accuracy);
            f1.push(r.metrics.test_weighted_f1);
        }
        let (ma, sa) = mean_std(&acc);
        let (mf, sf) = mean_std(&f1);
        rows.push(SweepRow {
            key: key.to_string(),
            value: value.clone(),
            seeds: seeds.len(),
            mean_test_accuracy: ma,
            std_test_accuracy: sa,
            mean_test_weighted_f1: mf,
            std_test_weighted_f1: sf,
        });
    }
    Ok(rows)
}
