//! Flat `key = value` training configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augmentor::SampleOptions;
use crate::error::{Error, Result};
use crate::graph::SplitMode;
use crate::numerics::OptimizerKind;

/// Which model is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// GCN trained jointly with the structure augmentor.
    Augmented,
    /// Plain GCN on the original graph.
    Gcn,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "augmented" => Ok(Self::Augmented),
            "gcn" => Ok(Self::Gcn),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (augmented|gcn)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Augmented => "augmented",
            Self::Gcn => "gcn",
        })
    }
}

/// Switches one augmentor loss off by zeroing its weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoAugLoss,
    NoProp,
    NoAlign,
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-aug-loss" | "no-aug" => Ok(Self::NoAugLoss),
            "no-prop" => Ok(Self::NoProp),
            "no-align" => Ok(Self::NoAlign),
            other => Err(Error::Config(format!(
                "unknown ablation '{other}' (no-aug-loss|no-prop|no-align)"
            ))),
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::NoAugLoss => "no-aug-loss",
            Self::NoProp => "no-prop",
            Self::NoAlign => "no-align",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub split: SplitMode,
    pub seed: u64,
    /// Weight of the classifier loss.
    pub alpha: f64,
    /// Weight of the reconstruction loss.
    pub beta: f64,
    /// Weight of the propagation loss.
    pub eta: f64,
    /// Weight of the alignment loss.
    pub delta: f64,
    /// Share of each head node's edges hidden when forging tail nodes.
    pub delta_drop: f64,
    pub reforge_each_epoch: bool,
    pub lr_g: f64,
    pub lr_a: f64,
    pub weight_decay_g: f64,
    pub weight_decay_a: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub gnn_layers: usize,
    pub gnn_hidden: usize,
    pub dropout: f64,
    pub enc_layers: usize,
    pub enc_hidden: usize,
    pub eps_init: f64,
    pub sample_rounds: usize,
    pub sample_temperature: f64,
    pub ablations: Vec<Ablation>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Augmented,
            split: SplitMode::Tail,
            seed: 0,
            alpha: 1.0,
            // tuned on Cora within the [0.01, 1] sweep range
            beta: 0.01,
            eta: 1.0,
            delta: 1.0,
            delta_drop: 0.5,
            reforge_each_epoch: false,
            lr_g: 0.01,
            lr_a: 0.01,
            weight_decay_g: 5e-4,
            weight_decay_a: 0.0,
            optimizer: OptimizerKind::Adam,
            batch_size: 512,
            max_epochs: 1000,
            patience: 100,
            gnn_layers: 2,
            gnn_hidden: 64,
            dropout: 0.5,
            enc_layers: 2,
            enc_hidden: 32,
            eps_init: 0.0,
            sample_rounds: 1,
            sample_temperature: 0.1,
            ablations: Vec::new(),
        }
    }
}

/// Every key, in file order.
pub const KEYS: &[&str] = &[
    "model",
    "split",
    "seed",
    "alpha",
    "beta",
    "eta",
    "delta",
    "delta_drop",
    "reforge_each_epoch",
    "lr_g",
    "lr_a",
    "weight_decay_g",
    "weight_decay_a",
    "optimizer",
    "batch_size",
    "max_epochs",
    "patience",
    "gnn_layers",
    "gnn_hidden",
    "dropout",
    "enc_layers",
    "enc_hidden",
    "eps_init",
    "sample_rounds",
    "sample_temperature",
    "ablation",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{value}'")))
}

impl TrainConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = v.parse()?,
            "split" => self.split = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "eta" => self.eta = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "delta_drop" => self.delta_drop = parse(key, v)?,
            "reforge_each_epoch" => self.reforge_each_epoch = parse(key, v)?,
            "lr_g" => self.lr_g = parse(key, v)?,
            "lr_a" => self.lr_a = parse(key, v)?,
            "weight_decay_g" => self.weight_decay_g = parse(key, v)?,
            "weight_decay_a" => self.weight_decay_a = parse(key, v)?,
            "optimizer" => self.optimizer = v.parse()?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "max_epochs" => self.max_epochs = parse(key, v)?,
            "patience" => self.patience = parse(key, v)?,
            "gnn_layers" => self.gnn_layers = parse(key, v)?,
            "gnn_hidden" => self.gnn_hidden = parse(key, v)?,
            "dropout" => self.dropout = parse(key, v)?,
            "enc_layers" => self.enc_layers = parse(key, v)?,
            "enc_hidden" => self.enc_hidden = parse(key, v)?,
            "eps_init" => self.eps_init = parse(key, v)?,
            "sample_rounds" => self.sample_rounds = parse(key, v)?,
            "sample_temperature" => self.sample_temperature = parse(key, v)?,
            "ablation" => {
                self.ablations = if v.is_empty() || v == "none" {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|a| a.trim().parse())
                        .collect::<Result<_>>()?
                };
                self.ablations.sort();
                self.ablations.dedup();
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "model" => self.model.to_string(),
            "split" => self.split.to_string(),
            "seed" => self.seed.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "eta" => self.eta.to_string(),
            "delta" => self.delta.to_string(),
            "delta_drop" => self.delta_drop.to_string(),
            "reforge_each_epoch" => self.reforge_each_epoch.to_string(),
            "lr_g" => self.lr_g.to_string(),
            "lr_a" => self.lr_a.to_string(),
            "weight_decay_g" => self.weight_decay_g.to_string(),
            "weight_decay_a" => self.weight_decay_a.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "gnn_layers" => self.gnn_layers.to_string(),
            "gnn_hidden" => self.gnn_hidden.to_string(),
            "dropout" => self.dropout.to_string(),
            "enc_layers" => self.enc_layers.to_string(),
            "enc_hidden" => self.enc_hidden.to_string(),
            "eps_init" => self.eps_init.to_string(),
            "sample_rounds" => self.sample_rounds.to_string(),
            "sample_temperature" => self.sample_temperature.to_string(),
            "ablation" => {
                if self.ablations.is_empty() {
                    "none".to_string()
                } else {
                    self.ablations
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(",")
                }
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        })
    }

    /// Parses a complete config file. Every key in [`KEYS`] must appear
    /// exactly once; `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if seen.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {}: key '{k}' given twice",
                    i + 1
                )));
            }
        }
        let mut cfg = Self::default();
        for key in KEYS {
            let v = seen
                .get(*key)
                .ok_or_else(|| Error::Config(format!("missing key '{key}'")))?;
            cfg.set(key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key"))
                .expect("write to string");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("eta", self.eta),
            ("delta", self.delta),
            ("weight_decay_g", self.weight_decay_g),
            ("weight_decay_a", self.weight_decay_a),
        ];
        for (k, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!(
                    "{k} must be a finite non-negative number, got {w}"
                )));
            }
        }
        for (k, lr) in [("lr_g", self.lr_g), ("lr_a", self.lr_a)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{k} must be positive, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.delta_drop) {
            return Err(Error::Config(format!(
                "delta_drop must lie in [0, 1), got {}",
                self.delta_drop
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.gnn_layers == 0
            || self.enc_layers == 0
            || self.gnn_hidden == 0
            || self.enc_hidden == 0
        {
            return Err(Error::Config(
                "layer counts and widths must be at least 1".into(),
            ));
        }
        if self.sample_rounds == 0 {
            return Err(Error::Config("sample_rounds must be at least 1".into()));
        }
        if !(self.sample_temperature > 0.0 && self.sample_temperature.is_finite()) {
            return Err(Error::Config("sample_temperature must be positive".into()));
        }
        Ok(())
    }

    /// `(β, η, δ)` after ablations.
    pub fn effective_weights(&self) -> (f64, f64, f64) {
        let off = |a| self.ablations.contains(&a);
        (
            if off(Ablation::NoAugLoss) {
                0.0
            } else {
                self.beta
            },
            if off(Ablation::NoProp) { 0.0 } else { self.eta },
            if off(Ablation::NoAlign) {
                0.0
            } else {
                self.delta
            },
        )
    }

    pub fn sample_options(&self) -> SampleOptions {
        SampleOptions {
            batch_size: self.batch_size,
            rounds: self.sample_rounds,
            temperature: self.sample_temperature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let mut c = TrainConfig::default();
        c.set("beta", "0.25").unwrap();
        c.set("ablation", "no-align,no-prop").unwrap();
        let back = TrainConfig::from_kv_text(&c.to_kv_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.effective_weights(), (0.25, 0.0, 0.0));
    }

    #[test]
    fn missing_key_is_named() {
        let text: String = TrainConfig::default()
            .to_kv_text()
            .lines()
            .filter(|l| !l.starts_with("lr_a"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = TrainConfig::from_kv_text(&text).unwrap_err();
        assert!(err.to_string().contains("'lr_a'"), "{err}");
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        let base = TrainConfig::default().to_kv_text();
        assert!(TrainConfig::from_kv_text(&format!("{base}bogus = 1\n")).is_err());
        assert!(TrainConfig::from_kv_text(&format!("{base}beta = 1\n")).is_err());
    }

    #[test]
    fn validation() {
        let d = TrainConfig::default();
        let c = TrainConfig {
            patience: d.max_epochs + 1,
            ..d.clone()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig { beta: -1.0, ..d };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
