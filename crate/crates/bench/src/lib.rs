//! Criterion benchmarks for the hot paths of `agr-core`; see `benches/`.
