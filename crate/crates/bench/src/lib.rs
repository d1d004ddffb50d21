//! Criterion benchmarks for the hot paths: feature hashing and K-NN search.
//! Run with `cargo bench -p semstack-bench`.
