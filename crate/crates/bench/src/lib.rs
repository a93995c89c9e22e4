//! Benchmarks only; see `benches/core.rs` and run `cargo bench -p practsig-bench`.
