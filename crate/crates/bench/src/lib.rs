//! Benchmark helpers; see the `benches/` directory.
