//! Criterion benchmarks for the control loop hot paths.
