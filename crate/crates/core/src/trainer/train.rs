//! The joint training loop.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ModelKind, TrainConfig};
use crate::augmentor::{
    compute_p2, forge_tails, loss_ali_tape, loss_aug_tape, loss_p_tape, sample_augmented_edges,
    AugmentedGraph, AugmentorParams, AugmentorVars, ForgedGraph, Noise,
};
use crate::error::{Error, Result};
use crate::gnn::{accuracy, gcn_forward, gcn_forward_tape, loss_sup, GnnParams};
use crate::graph::{AttributedGraph, DatasetSplit, NodePartition};
use crate::numerics::rng::{epoch_rng, stream, stream_rng, RunRng};
use crate::numerics::{
    normalize_adjacency, DenseMatrix, Optimizer, OptimizerKind, SparseMatrix, Tape, Var,
};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_sup: f64,
    pub l_aug: f64,
    pub l_p: f64,
    pub l_ali: f64,
    pub added_edge_count: usize,
    /// Share of added edges joining two nodes with the same label.
    pub added_same_label_fraction: Option<f64>,
    pub valid_accuracy: f64,
    pub wall_time: f64,
}

/// Early stopping on validation accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    pub best_valid_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_valid_accuracy: f64::NEG_INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
        }
    }

    /// Records an epoch; returns `true` when it is the new best.
    pub fn observe(&mut self, epoch: usize, valid_accuracy: f64) -> bool {
        if valid_accuracy > self.best_valid_accuracy {
            self.best_valid_accuracy = valid_accuracy;
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            true
        } else {
            self.epochs_since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epochs_since_improvement >= self.patience
    }
}

/// Everything needed to rebuild the classifier's input graph and logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub gnn: GnnParams,
    /// Augmentor state that produced this epoch's sampled graph.
    pub augmentor: Option<AugmentorParams>,
    /// Epoch whose sampling stream built the graph (1-based).
    pub epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub best: Snapshot,
    pub best_valid_accuracy: f64,
    pub logs: Vec<EpochLog>,
    pub forged: Option<ForgedGraph>,
}

/// Which parameter groups received gradient in one backward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct GradientAudit {
    pub gnn_nonzero_from_augmentor: bool,
    pub augmentor_nonzero_from_gnn: bool,
}

fn any_grad(tape: &Tape, vars: &[Var]) -> bool {
    vars.iter().any(|&v| {
        tape.grad(v)
            .is_some_and(|g| g.data().iter().any(|&x| x != 0.0))
    })
}

fn aug_var_list(v: &AugmentorVars) -> Vec<Var> {
    v.layers
        .iter()
        .copied()
        .chain([v.mu_head, v.logvar_head, v.eps_raw])
        .collect()
}

/// Normalised adjacency plus the edges added to it.
pub type ClassifierGraph = (Arc<SparseMatrix>, Vec<(usize, usize)>);

/// Immutable inputs shared by every epoch.
pub struct Context<'a> {
    pub g: &'a AttributedGraph,
    pub partition: &'a NodePartition,
    pub split: &'a DatasetSplit,
    pub config: &'a TrainConfig,
    pub x: Arc<SparseMatrix>,
    pub a_norm: Arc<SparseMatrix>,
}

impl<'a> Context<'a> {
    pub fn new(
        g: &'a AttributedGraph,
        partition: &'a NodePartition,
        split: &'a DatasetSplit,
        config: &'a TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if split.train.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        if split.valid.is_empty() {
            return Err(Error::Empty("validation set".into()));
        }
        if config.model == ModelKind::Augmented && partition.tail_nodes.is_empty() {
            return Err(Error::Empty("tail node set".into()));
        }
        Ok(Self {
            g,
            partition,
            split,
            config,
            x: Arc::new(g.features().clone()),
            a_norm: Arc::new(normalize_adjacency(g.adjacency())?),
        })
    }

    /// Normalised classifier graph for `epoch` given the augmentor state
    /// that epoch started with. Returns the added edges too.
    pub fn classifier_graph(
        &self,
        augmentor: Option<&AugmentorParams>,
        epoch: usize,
    ) -> Result<ClassifierGraph> {
        match augmentor {
            None => Ok((Arc::clone(&self.a_norm), Vec::new())),
            Some(aug) => {
                let out = self.augment(aug, epoch)?;
                Ok((
                    Arc::new(normalize_adjacency(&out.adjacency)?),
                    out.added_edges,
                ))
            }
        }
    }

    /// The augmented graph sampled in `epoch` from the given augmentor state.
    pub fn augment(&self, aug: &AugmentorParams, epoch: usize) -> Result<AugmentedGraph> {
        let p2 = compute_p2(&self.a_norm, &self.x, aug)?;
        let mut rng = epoch_rng(self.config.seed, stream::SAMPLE, epoch);
        sample_augmented_edges(
            &p2,
            self.g.adjacency(),
            &self.partition.tail_nodes,
            &self.config.sample_options(),
            &mut rng,
        )
    }
}

fn optimizer(kind: OptimizerKind, lr: f64, wd: f64) -> Optimizer {
    match kind {
        OptimizerKind::Adam => Optimizer::adam(lr),
        OptimizerKind::Sgd => Optimizer::sgd(lr),
    }
    .with_weight_decay(wd)
}

fn finite(epoch: usize, name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Diverged {
            epoch,
            message: format!("{name} is {v}"),
        })
    }
}

/// Parameters initialised from the run seed.
pub fn init_params(ctx: &Context) -> Result<(GnnParams, Option<AugmentorParams>)> {
    let c = ctx.config;
    let mut rng = stream_rng(c.seed, stream::INIT);
    let gnn = GnnParams::init(
        ctx.g.n_features(),
        c.gnn_hidden,
        c.gnn_layers,
        ctx.g.n_classes(),
        &mut rng,
    )?;
    let aug = match c.model {
        ModelKind::Gcn => None,
        ModelKind::Augmented => Some(AugmentorParams::init(
            ctx.g.n_nodes(),
            ctx.g.n_features(),
            c.enc_hidden,
            c.enc_layers,
            ctx.g.n_classes(),
            c.eps_init,
            &mut rng,
        )?),
    };
    Ok((gnn, aug))
}

/// Losses of one augmentor step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AugLosses {
    pub l_aug: f64,
    pub l_p: f64,
    pub l_ali: f64,
}

/// One classifier update on `a2`. Returns `(L_sup, audit)`; the audit binds
/// the augmentor weights on the same tape to prove they get no gradient.
pub fn gnn_step(
    ctx: &Context,
    gnn: &mut GnnParams,
    aug: Option<&AugmentorParams>,
    a2: &Arc<SparseMatrix>,
    epoch: usize,
) -> Result<(f64, GradientAudit)> {
    let c = ctx.config;
    let mut tape = Tape::new();
    let phi = gnn.bind(&mut tape);
    let theta = aug.map(|a| a.bind(&mut tape));
    let mut drop_rng = epoch_rng(c.seed, stream::DROPOUT, epoch);
    let z = gcn_forward_tape(
        &mut tape,
        a2,
        &ctx.x,
        &phi,
        Some((c.dropout, &mut drop_rng)),
    )?;
    let ce = loss_sup(&mut tape, z, ctx.g.labels(), &ctx.split.train)?;
    let loss = tape.scale(ce, c.alpha);
    let l_sup = finite(epoch, "L_sup", tape.scalar(ce))?;
    tape.backward(loss)?;
    let audit = GradientAudit {
        augmentor_nonzero_from_gnn: theta
            .as_ref()
            .is_some_and(|t| any_grad(&tape, &aug_var_list(t))),
        ..Default::default()
    };
    for (p, &v) in gnn.params_mut().zip(&phi) {
        p.set_grad(tape.grad_or_zeros(v))?;
    }
    let opt = optimizer(c.optimizer, c.lr_g, c.weight_decay_g);
    opt.step_all(gnn.params_mut());
    Ok((l_sup, audit))
}

/// One joint update of the augmentor weights and mixing weights.
pub fn augmentor_step(
    ctx: &Context,
    aug: &mut AugmentorParams,
    gnn: &GnnParams,
    forged: &Arc<SparseMatrix>,
    a2: &Arc<SparseMatrix>,
    epoch: usize,
) -> Result<(AugLosses, GradientAudit)> {
    let c = ctx.config;
    let (beta, eta, delta) = c.effective_weights();
    let mut losses = AugLosses::default();
    if beta == 0.0 && eta == 0.0 && delta == 0.0 {
        return Ok((losses, GradientAudit::default()));
    }
    let (n, d) = (ctx.g.n_nodes(), aug.latent_dim());
    let mut noise_rng: RunRng = epoch_rng(c.seed, stream::NOISE, epoch);
    let noise_aug = Noise::draw(n, d, &mut noise_rng);
    let noise_ali = Noise::draw(n, d, &mut noise_rng);

    let mut tape = Tape::new();
    let theta = aug.bind(&mut tape);
    let phi = gnn.bind(&mut tape);
    let mut terms = Vec::new();
    if beta > 0.0 {
        let l = loss_aug_tape(
            &mut tape,
            forged,
            ctx.g.adjacency(),
            &ctx.x,
            &theta,
            &noise_aug,
        )?;
        losses.l_aug = finite(epoch, "L_aug", tape.scalar(l))?;
        terms.push(tape.scale(l, beta));
    }
    if eta > 0.0 {
        let (l, _) = loss_p_tape(
            &mut tape,
            &ctx.a_norm,
            &ctx.x,
            &theta,
            ctx.g.labels(),
            &ctx.split.train,
        )?;
        losses.l_p = finite(epoch, "L_p", tape.scalar(l))?;
        terms.push(tape.scale(l, eta));
    }
    if delta > 0.0 {
        // the classifier's logits are the prior; computed on this tape from
        // the bound weights and cut off so the audit can observe the cut
        let z2 = gcn_forward_tape(&mut tape, a2, &ctx.x, &phi, None)?;
        let z2 = tape.detach(z2);
        let prior = tape.value(z2).clone();
        let l = loss_ali_tape(&mut tape, a2, &ctx.x, &theta, &prior, &noise_ali)?;
        losses.l_ali = finite(epoch, "L_ali", tape.scalar(l))?;
        terms.push(tape.scale(l, delta));
    }
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = tape.add(total, t)?;
    }
    tape.backward(total)?;
    let audit = GradientAudit {
        gnn_nonzero_from_augmentor: any_grad(&tape, &phi),
        ..Default::default()
    };
    aug.collect_grads(&tape, &theta)?;
    let opt = optimizer(c.optimizer, c.lr_a, c.weight_decay_a);
    opt.step_all(aug.params_mut());
    Ok((losses, audit))
}

/// Inference logits of a snapshot, rebuilding its classifier graph.
pub fn snapshot_logits(ctx: &Context, snap: &Snapshot) -> Result<(DenseMatrix, Arc<SparseMatrix>)> {
    let (a2, _) = ctx.classifier_graph(snap.augmentor.as_ref(), snap.epoch)?;
    Ok((gcn_forward(&a2, &ctx.x, &snap.gnn)?, a2))
}

/// Trains until early stopping or `max_epochs` and returns the snapshot with
/// the best validation accuracy. Every epoch: sample the classifier graph
/// from the current augmentor, update the classifier, then update the
/// augmentor.
pub fn train(
    g: &AttributedGraph,
    partition: &NodePartition,
    split: &DatasetSplit,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    train_with(g, partition, split, config, |_| {})
}

/// [`train`] with a callback invoked after each epoch (for streaming logs).
pub fn train_with(
    g: &AttributedGraph,
    partition: &NodePartition,
    split: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutput> {
    let ctx = Context::new(g, partition, split, config)?;
    let (mut gnn, mut aug) = init_params(&ctx)?;
    let forge = |epoch: usize| -> Result<ForgedGraph> {
        let seed = if config.reforge_each_epoch {
            config.seed.wrapping_add(epoch as u64)
        } else {
            config.seed
        };
        forge_tails(g, partition, config.delta_drop, seed)
    };
    let mut forged = match aug {
        Some(_) => Some(forge(0)?),
        None => None,
    };
    let mut forged_norm = match &forged {
        Some(f) => Some(Arc::new(normalize_adjacency(&f.adjacency)?)),
        None => None,
    };

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best: Option<Snapshot> = None;
    let mut logs = Vec::new();
    let start = Instant::now();
    for epoch in 1..=config.max_epochs {
        if config.reforge_each_epoch && epoch > 1 && aug.is_some() {
            let f = forge(epoch)?;
            forged_norm = Some(Arc::new(normalize_adjacency(&f.adjacency)?));
            forged = Some(f);
        }
        let aug_before = aug.clone();
        let (a2, added) = ctx.classifier_graph(aug.as_ref(), epoch)?;
        let (l_sup, audit) = gnn_step(&ctx, &mut gnn, aug.as_ref(), &a2, epoch)?;
        debug_assert!(!audit.augmentor_nonzero_from_gnn);
        let mut losses = AugLosses::default();
        if let (Some(a), Some(f)) = (aug.as_mut(), forged_norm.as_ref()) {
            let (l, audit) = augmentor_step(&ctx, a, &gnn, f, &a2, epoch)?;
            debug_assert!(!audit.gnn_nonzero_from_augmentor);
            losses = l;
        }
        let z = gcn_forward(&a2, &ctx.x, &gnn)?;
        let valid_accuracy = accuracy(&z, g.labels(), &split.valid)?;
        let labels = g.labels();
        let same = added
            .iter()
            .filter(|&&(u, v)| labels[u] == labels[v])
            .count();
        let log = EpochLog {
            epoch,
            l_sup,
            l_aug: losses.l_aug,
            l_p: losses.l_p,
            l_ali: losses.l_ali,
            added_edge_count: added.len(),
            added_same_label_fraction: (!added.is_empty())
                .then(|| same as f64 / added.len() as f64),
            valid_accuracy,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
        if stopper.observe(epoch, valid_accuracy) {
            best = Some(Snapshot {
                gnn: gnn.clone(),
                augmentor: aug_before,
                epoch,
            });
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok(TrainOutput {
        best: best.expect("at least one epoch ran"),
        best_valid_accuracy: stopper.best_valid_accuracy,
        logs,
        forged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_one_stops_at_second_worse_epoch() {
        let mut s = EarlyStopping::new(1);
        assert!(s.observe(1, 0.5));
        assert!(!s.should_stop());
        assert!(!s.observe(2, 0.4));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch, 1);
    }

    #[test]
    fn ties_do_not_count_as_improvement() {
        let mut s = EarlyStopping::new(3);
        s.observe(1, 0.5);
        assert!(!s.observe(2, 0.5));
        assert_eq!(s.epochs_since_improvement, 1);
    }
}
