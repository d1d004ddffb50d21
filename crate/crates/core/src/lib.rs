//! Semantic retrieval and pairwise ranking for product search, end to end:
//! feature hashing, two-tower embedding training, an inverted-file vector
//! index, a Siamese pairwise re-ranker, offline metrics, and a benchmark
//! harness — with deterministic synthetic data so quality has a computable
//! ground truth.
//!
//! The pipeline mirrors a production search stack at desk scale:
//!
//! 1. [`datagen`] plants a clustered catalog and session logs with a hidden
//!    per-item utility, then materializes training triples and pairs.
//! 2. [`dsr`] trains the two-tower retrieval model with a margin hinge loss
//!    over (query, positive, negative) triples.
//! 3. [`index`] stores unit-norm item embeddings for exact or IVF top-K
//!    search by dot product, with a checksummed on-disk format.
//! 4. [`dpr`] trains the shared-tower pairwise re-ranker on preference pairs
//!    and scores candidates one tower pass per item.
//! 5. [`eval`] computes session AUC, NDCG@k, recall, and latency/QPS reports.
//!
//! Everything is a pure function of `(config, seed)`: same inputs, same bytes.

pub mod datagen;
pub mod dpr;
pub mod dsr;
pub mod error;
pub mod eval;
pub mod features;
pub mod index;
pub mod manifest;
pub mod nn;
pub mod persist;

pub use error::{Error, Result};
