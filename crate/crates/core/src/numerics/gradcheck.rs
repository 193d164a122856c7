//! Central finite-difference verification of tape gradients.

use super::dense::DenseMatrix;
use super::tape::{Tape, Var};
use crate::error::Result;

pub const STEP: f64 = 1e-5;

/// Relative error with a small absolute floor so that gradients which are
/// both essentially zero compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Builds the scalar `f` on a fresh tape with every input as a trainable
/// leaf, and returns the largest relative error between the tape gradient
/// and central differences over every input entry.
///
/// `f` must be deterministic: fixed noise, fixed masks.
pub fn gradcheck<F>(f: F, inputs: &[DenseMatrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<DenseMatrix> = vars.iter().map(|&v| tape.grad_or_zeros(v)).collect();

    let eval = |perturbed: &[DenseMatrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|m| t.leaf(m.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.scalar(o))
    };

    let mut work: Vec<DenseMatrix> = inputs.to_vec();
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        for idx in 0..input.data().len() {
            let x0 = input.data()[idx];
            work[k].data_mut()[idx] = x0 + STEP;
            let plus = eval(&work)?;
            work[k].data_mut()[idx] = x0 - STEP;
            let minus = eval(&work)?;
            work[k].data_mut()[idx] = x0;
            let numeric = (plus - minus) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[k].data()[idx], numeric));
        }
    }
    Ok(worst)
}
