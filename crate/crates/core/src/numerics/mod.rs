//! Matrix kernels, reverse-mode differentiation, optimisers and checkpoints.

pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod optim;
pub mod rng;
pub mod sparse;
pub mod tape;

pub use checkpoint::Checkpoint;
pub use dense::DenseMatrix;
pub use gradcheck::gradcheck;
pub use optim::{Optimizer, OptimizerKind, Parameter};
pub use sparse::{normalize_adjacency, spmm, SparseMatrix};
pub use tape::{sigmoid, Tape, Var};
