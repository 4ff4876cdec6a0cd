//! Benchmarks live in `benches/`; run them with `cargo bench -p negcomp-bench`.

pub use negcomp_core;
