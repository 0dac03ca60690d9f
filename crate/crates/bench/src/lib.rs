//! Benchmarks for the linelab compositors; run with `cargo bench -p linelab-bench`.
