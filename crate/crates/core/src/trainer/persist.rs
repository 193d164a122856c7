//! Snapshot files: a binary tensor checkpoint plus a JSON sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, TrainConfig};
use super::train::Snapshot;
use crate::augmentor::AugmentorParams;
use crate::error::{Error, Result};
use crate::gnn::GnnParams;
use crate::numerics::rng::stream_rng;
use crate::numerics::Checkpoint;

/// Hyperparameters and shapes stored next to the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub config: TrainConfig,
    pub epoch: usize,
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    pub best_valid_accuracy: f64,
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}

pub fn save_snapshot(
    path: &Path,
    snap: &Snapshot,
    config: &TrainConfig,
    n_nodes: usize,
    best_valid_accuracy: f64,
) -> Result<()> {
    let mut ckpt = Checkpoint::new();
    snap.gnn.save_into(&mut ckpt);
    if let Some(a) = &snap.augmentor {
        a.save_into(&mut ckpt);
    }
    ckpt.save(path)?;
    let side = Sidecar {
        format_version: crate::numerics::checkpoint::VERSION,
        config: config.clone(),
        epoch: snap.epoch,
        n_nodes,
        n_features: snap.gnn.n_features(),
        n_classes: snap.gnn.n_classes(),
        best_valid_accuracy,
    };
    let json = serde_json::to_string_pretty(&side).expect("sidecar serialises");
    let sp = sidecar_path(path);
    std::fs::write(&sp, json).map_err(|e| Error::io(&sp, e))
}

pub fn load_snapshot(path: &Path) -> Result<(Snapshot, Sidecar)> {
    let sp = sidecar_path(path);
    let text = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: Sidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", sp.display())))?;
    let ckpt = Checkpoint::load(path)?;
    let c = &side.config;
    // shapes come from the sidecar; values are overwritten from the file
    let mut rng = stream_rng(0, 0);
    let mut gnn = GnnParams::init(
        side.n_features,
        c.gnn_hidden,
        c.gnn_layers,
        side.n_classes,
        &mut rng,
    )?;
    gnn.load_from(&ckpt)?;
    let augmentor = match c.model {
        ModelKind::Gcn => None,
        ModelKind::Augmented => {
            let mut a = AugmentorParams::init(
                side.n_nodes,
                side.n_features,
                c.enc_hidden,
                c.enc_layers,
                side.n_classes,
                0.0,
                &mut rng,
            )?;
            a.load_from(&ckpt)?;
            Some(a)
        }
    };
    Ok((
        Snapshot {
            gnn,
            augmentor,
            epoch: side.epoch,
        },
        side,
    ))
}
