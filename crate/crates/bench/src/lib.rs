//! Criterion benchmarks for `gsc-core`; see `benches/`.
