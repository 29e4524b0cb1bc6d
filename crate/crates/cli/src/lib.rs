//! Scenario runner for the mean-reflected BSDE solvers: config ingestion,
//! solver dispatch, invariant checks, and file outputs.

pub mod config;
pub mod run;
