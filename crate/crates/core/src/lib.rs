//! Socio-technical graph platform for software analytics.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: typed property graph of users, pull requests, work items,
//!   files and repositories, with undirected shortest-path proximity.
//! - [`ingest`]: event-file discovery, bootstrap/incremental replay, the
//!   pipeline registry and gap detection with self-healing.
//! - [`index`]: the identifier-aware tokenizer and BM25 artifact/expert
//!   indices.
//! - [`recommend`]: candidate retrieval, percentile filtering and
//!   graph-proximity re-ranking.
//! - [`feed`]: developer homepage (news feed, follows, active items,
//!   related people, expertise).
//! - [`synth`] and [`eval`]: seeded synthetic corpora with planted ground
//!   truth and the top-K accuracy / MRR ablation harness.

pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod feed;
pub mod graph;
pub mod index;
pub mod ingest;
pub mod recommend;
pub mod synth;

pub use error::{Error, Result};
