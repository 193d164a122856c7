//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed and a fixed stream id, so adding a draw in one place never
//! shifts the numbers seen elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::dense::DenseMatrix;

pub type RunRng = ChaCha8Rng;

/// Stream ids. Values are part of the reproducibility contract.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FORGE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const SAMPLE: u64 = 6;
}

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for `(seed, stream)` offset to a particular epoch.
pub fn epoch_rng(seed: u64, stream: u64, epoch: usize) -> RunRng {
    let mut rng = stream_rng(seed, stream);
    // 2^32 words per epoch is far more than any epoch consumes
    rng.set_word_pos((epoch as u128) << 32);
    rng
}

/// Matrix of independent standard normal draws.
pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}

/// Glorot-uniform initialisation.
pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}

/// Inverted dropout mask: entries are `0` with probability `p`, else `1/(1−p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> DenseMatrix {
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("length matches")
}
