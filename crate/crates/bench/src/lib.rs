//! Criterion benchmarks for ksol-core live in `benches/`.
