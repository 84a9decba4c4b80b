//! Harness library behind the `mapping-cli` binary: run configuration,
//! seeded batch evaluation, episode tracing, and curve plotting. The binary
//! is a thin argument-parsing layer over these modules.

pub mod config;
pub mod eval;
pub mod plot;
pub mod trace;
