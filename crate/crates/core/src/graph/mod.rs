//! Typed property graph of actors, artifacts and their relationships.

mod schema;
mod store;
pub mod tsv;

use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

pub use schema::{EdgeType, NodeId, NodeKind};
pub use store::{
    Direction, Graph, GraphEdge, GraphNode, GraphStats, Mutation, Outcome, DEFAULT_MAX_DEPTH,
    FILE_TYPES,
};

/// Thread-shareable graph handle: concurrent readers, one writer at a time.
#[derive(Debug, Clone, Default)]
pub struct SharedGraph(Arc<RwLock<Graph>>);

impl SharedGraph {
    pub fn new(graph: Graph) -> Self {
        SharedGraph(Arc::new(RwLock::new(graph)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Graph> {
        self.0.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, Graph> {
        self.0.write().unwrap_or_else(|p| p.into_inner())
    }

    pub fn apply(&self, mutation: Mutation) -> crate::Result<Outcome> {
        self.write().apply(mutation)
    }

    /// Swaps in a whole new graph; readers observe either the old or the new one.
    pub fn replace(&self, graph: Graph) {
        *self.write() = graph;
    }

    pub fn snapshot(&self) -> Graph {
        self.read().clone()
    }
}
