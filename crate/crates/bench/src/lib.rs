//! Criterion benchmarks for the fhlab kernels; see `benches/`.
