//! Criterion benchmarks for the hot paths of the loop; see `benches/loop.rs`.
