//! Criterion benchmarks for the pipeline hot paths; see `benches/`.
//! Run with `cargo bench -p medcurate-bench`.
