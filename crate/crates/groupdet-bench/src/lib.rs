//! Benchmark-only crate; see `benches/ops.rs`. Run with `cargo bench`.
