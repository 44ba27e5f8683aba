//! Criterion benchmarks for `conelab`; see `benches/`.
