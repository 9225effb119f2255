//! Criterion benchmarks for the discosde schemes live in `benches/`.
