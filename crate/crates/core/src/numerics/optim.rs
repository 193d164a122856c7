//! Trainable parameters and first-order optimisers.

use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A named trainable matrix with its gradient and optimiser moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    m: DenseMatrix,
    v: DenseMatrix,
    step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            grad: DenseMatrix::zeros(r, c),
            m: DenseMatrix::zeros(r, c),
            v: DenseMatrix::zeros(r, c),
            step: 0,
            value,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Replaces the gradient; shapes must match.
    pub fn set_grad(&mut self, grad: DenseMatrix) -> Result<()> {
        self.value
            .same_shape(&grad, &format!("gradient of {}", self.name))?;
        self.grad = grad;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(Error::Config(format!(
                "unknown optimizer '{other}' (adam|sgd)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        })
    }
}

/// Adam or plain SGD with optional L2 weight decay folded into the gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(lr)
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn step(&self, p: &mut Parameter) {
        p.step += 1;
        let wd = self.weight_decay;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, &g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                    *w -= self.lr * (g + wd * *w);
                }
            }
            OptimizerKind::Adam => {
                let t = p.step as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                let (b1, b2) = (self.beta1, self.beta2);
                let value = p.value.data_mut();
                let m = p.m.data_mut();
                let v = p.v.data_mut();
                for (i, &g0) in p.grad.data().iter().enumerate() {
                    let g = g0 + wd * value[i];
                    m[i] = b1 * m[i] + (1.0 - b1) * g;
                    v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }

    pub fn step_all<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        for p in params {
            self.step(p);
        }
    }
}
