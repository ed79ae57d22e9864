//! Benchmarks for the mds toolkit. See `benches/`.
