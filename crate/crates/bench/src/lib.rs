//! Criterion benchmarks for the EP engine; see `benches/`.
