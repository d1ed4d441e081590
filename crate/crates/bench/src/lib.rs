//! Criterion benchmarks for the scan; see `benches/`.
