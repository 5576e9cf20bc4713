//! Benchmark support: re-exports the core crate for the criterion harness.

pub use caloric_core::*;
