//! Minimal neural toolkit for the two tower topologies: embedding lookup
//! with sum pooling, dense ReLU layers, L2 output normalization, exact
//! reverse-mode gradients, Adam, and a finite-difference gradient checker.
//!
//! Everything runs in double precision; single precision appears only in
//! serialized artifacts. No general autodiff — the tower shape (pooled
//! embeddings + numeric concat, dense stack, optional normalize) is the
//! only topology, and its backward pass is written out by hand.

mod adam;
mod gradcheck;
mod tower;

pub use adam::{adam_scalar_update, AdamConfig, TowerOptimizer};
pub use gradcheck::{central_differences, grad_check, max_rel_error};
pub use tower::{
    l2_normalize, Activation, DenseGrad, DenseLayer, EmbeddingTable, SparseGrad, Tower,
    TowerGrads, TowerTrace, NORM_EPS,
};
