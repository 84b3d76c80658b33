//! Criterion benchmarks for the hot numeric kernels; see `benches/kernels.rs`.
