//! Turning graph content into artifact and expert documents.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::bm25::{Bm25Params, DocKind, DocMetadata, IndexDocument, InvertedIndex};
use super::tokenize::{tokenize, Token};
use crate::graph::{Direction, EdgeType, Graph, NodeId, NodeKind};
use crate::Result;

/// Which artifact fields contribute tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSelection {
    pub metadata: bool,
    pub title: bool,
    pub description: bool,
}

impl Default for FieldSelection {
    fn default() -> Self {
        FieldSelection::ALL
    }
}

impl FieldSelection {
    pub const ALL: FieldSelection = FieldSelection {
        metadata: true,
        title: true,
        description: true,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BuildOptions {
    pub fields: FieldSelection,
    pub params: Bm25Params,
}

fn metadata_of(graph: &Graph, id: &NodeId) -> DocMetadata {
    let get = |k: &str| graph.attribute(id, k).map(str::to_string);
    DocMetadata {
        organization: get("organization"),
        project: get("project"),
        repository: get("repository"),
    }
}

/// Tokens of one PR or work item under the given field selection.
pub fn artifact_tokens(graph: &Graph, id: &NodeId, fields: FieldSelection) -> Vec<Token> {
    let mut out = Vec::new();
    if fields.metadata {
        let meta = metadata_of(graph, id);
        for value in [&meta.organization, &meta.project, &meta.repository]
            .into_iter()
            .flatten()
        {
            out.extend(tokenize(value));
        }
    }
    if fields.title {
        out.extend(tokenize(graph.attribute(id, "title").unwrap_or("")));
    }
    if fields.description {
        out.extend(tokenize(graph.attribute(id, "description").unwrap_or("")));
    }
    out
}

pub fn artifact_documents(graph: &Graph, fields: FieldSelection) -> Vec<IndexDocument> {
    let mut docs = Vec::new();
    for (kind, doc_kind) in [
        (NodeKind::PullRequest, DocKind::PullRequest),
        (NodeKind::WorkItem, DocKind::WorkItem),
    ] {
        for id in graph.nodes_of(kind) {
            docs.push(IndexDocument {
                doc_id: id.to_string(),
                doc_kind,
                metadata: metadata_of(graph, id),
                body_tokens: artifact_tokens(graph, id, fields),
            });
        }
    }
    docs
}

/// One document per user who created at least one PR. Its tokens are those
/// of the authored PRs plus the work items linked to them, so a topic weighs
/// more the more often it shows up in the developer's own work.
pub fn expert_documents(graph: &Graph, fields: FieldSelection) -> Vec<IndexDocument> {
    let mut docs = Vec::new();
    for user in graph.nodes_of(NodeKind::User) {
        let prs = graph.adjacent(user, EdgeType::Creates, Direction::Out);
        if prs.is_empty() {
            continue;
        }
        let work_items: BTreeSet<NodeId> = prs
            .iter()
            .flat_map(|pr| graph.adjacent(pr, EdgeType::LinkedTo, Direction::In))
            .collect();
        let body_tokens = prs
            .iter()
            .chain(&work_items)
            .flat_map(|id| artifact_tokens(graph, id, fields))
            .collect();
        docs.push(IndexDocument {
            doc_id: user.to_string(),
            doc_kind: DocKind::Expert,
            metadata: DocMetadata::default(),
            body_tokens,
        });
    }
    docs
}

pub fn build_artifact_index(graph: &Graph) -> InvertedIndex {
    build_artifact_index_with(graph, BuildOptions::default()).expect("default parameters are valid")
}

pub fn build_expert_index(graph: &Graph) -> InvertedIndex {
    build_expert_index_with(graph, BuildOptions::default()).expect("default parameters are valid")
}

pub fn build_artifact_index_with(graph: &Graph, opts: BuildOptions) -> Result<InvertedIndex> {
    InvertedIndex::build(artifact_documents(graph, opts.fields), opts.params)
}

pub fn build_expert_index_with(graph: &Graph, opts: BuildOptions) -> Result<InvertedIndex> {
    InvertedIndex::build(expert_documents(graph, opts.fields), opts.params)
}

/// Artifact and expert indices built from the same graph snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexPair {
    pub artifact: InvertedIndex,
    pub expert: InvertedIndex,
}

impl IndexPair {
    pub fn build(graph: &Graph) -> Self {
        IndexPair {
            artifact: build_artifact_index(graph),
            expert: build_expert_index(graph),
        }
    }

    pub fn build_with(graph: &Graph, opts: BuildOptions) -> Result<Self> {
        Ok(IndexPair {
            artifact: build_artifact_index_with(graph, opts)?,
            expert: build_expert_index_with(graph, opts)?,
        })
    }

    /// Rebuilds against the current graph, keeping the BM25 parameters.
    pub fn refresh(&self, graph: &Graph) -> Self {
        IndexPair {
            artifact: refresh(&self.artifact, graph, DocSource::Artifacts),
            expert: refresh(&self.expert, graph, DocSource::Experts),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DocSource {
    Artifacts,
    Experts,
}

/// A from-scratch rebuild over `graph` with the old index's parameters.
pub fn refresh(old: &InvertedIndex, graph: &Graph, source: DocSource) -> InvertedIndex {
    let opts = BuildOptions {
        fields: FieldSelection::ALL,
        params: old.params(),
    };
    let docs = match source {
        DocSource::Artifacts => artifact_documents(graph, opts.fields),
        DocSource::Experts => expert_documents(graph, opts.fields),
    };
    InvertedIndex::build(docs, opts.params).expect("parameters were validated when `old` was built")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphEdge, GraphNode};

    fn pr(graph: &mut Graph, id: &str, author: &str, title: &str) {
        graph
            .upsert_node(
                GraphNode::new(NodeId::pull_request(id))
                    .with("title", title)
                    .with("repository", "mail"),
            )
            .unwrap();
        graph
            .upsert_edge(GraphEdge::new(
                NodeId::user(author),
                EdgeType::Creates,
                NodeId::pull_request(id),
            ))
            .unwrap();
    }

    fn tok(w: &str) -> Token {
        Token::new(w).unwrap()
    }

    #[test]
    fn one_document_per_artifact() {
        let mut g = Graph::new();
        pr(&mut g, "1", "u1", "Fix ImapTransfer bug");
        pr(&mut g, "2", "u2", "socket");
        g.upsert_node(GraphNode::new(NodeId::work_item("w")).with("repository", "mail"))
            .unwrap();
        let idx = build_artifact_index(&g);
        assert_eq!(idx.doc_count(), 3);
        for t in ["fix", "imap", "transfer", "imap transfer", "bug"] {
            assert!(
                idx.postings(&tok(t)).any(|(d, _)| d == "pull_request:1"),
                "{t}"
            );
        }
        // The untitled work item is still indexed through its metadata.
        assert!(idx.contains_doc("work_item:w"));
        assert_eq!(build_artifact_index(&Graph::new()).doc_count(), 0);
    }

    #[test]
    fn expert_term_frequency_counts_every_authored_pr() {
        let mut g = Graph::new();
        pr(&mut g, "1", "u1", "socket timeout");
        pr(&mut g, "2", "u1", "socket leak");
        g.upsert_node(GraphNode::new(NodeId::user("idle"))).unwrap();
        let idx = build_expert_index(&g);
        assert_eq!(idx.doc_count(), 1);
        assert!(!idx.contains_doc("user:idle"));
        let tf: Vec<(&str, u32)> = idx.postings(&tok("socket")).collect();
        assert_eq!(tf, [("user:u1", 2)]);
    }

    #[test]
    fn linked_work_items_feed_the_expert_document() {
        let mut g = Graph::new();
        pr(&mut g, "1", "u1", "parser");
        g.upsert_node(GraphNode::new(NodeId::work_item("w")).with("title", "grammar"))
            .unwrap();
        g.upsert_edge(GraphEdge::new(
            NodeId::work_item("w"),
            EdgeType::LinkedTo,
            NodeId::pull_request("1"),
        ))
        .unwrap();
        let idx = build_expert_index(&g);
        assert_eq!(idx.postings(&tok("grammar")).count(), 1);
    }

    #[test]
    fn field_selection_limits_tokens() {
        let mut g = Graph::new();
        pr(&mut g, "1", "u1", "compiler");
        let meta_only = FieldSelection {
            metadata: true,
            title: false,
            description: false,
        };
        let idx = build_artifact_index_with(
            &g,
            BuildOptions {
                fields: meta_only,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(idx.doc_frequency(&tok("compiler")), 0);
        assert_eq!(idx.doc_frequency(&tok("mail")), 1);
    }

    #[test]
    fn refresh_equals_fresh_build() {
        let mut g = Graph::new();
        pr(&mut g, "1", "u1", "alpha");
        let pair = IndexPair::build(&g);
        assert_eq!(pair.refresh(&g), pair);
        pr(&mut g, "2", "u2", "beta");
        let refreshed = pair.refresh(&g);
        assert_eq!(
            refreshed.artifact.doc_count(),
            pair.artifact.doc_count() + 1
        );
        assert_eq!(refreshed, IndexPair::build(&g));
    }
}
