//! Reference implementations and fixtures used only by tests.
//!
//! Everything here is written independently of the production code paths it
//! checks: scorers are computed from raw token lists, distances by edge
//! relaxation instead of breadth-first search, and graph equality by
//! comparing plain sets.

pub mod bm25;
pub mod convergence;
pub mod fixtures;
pub mod graphs;
