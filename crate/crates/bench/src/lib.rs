//! Criterion benchmarks for the gate-sequence engine live in `benches/`.
