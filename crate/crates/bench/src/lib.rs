//! Criterion benchmarks for the simulation, adjoint and optimizer paths; see `benches/`.
