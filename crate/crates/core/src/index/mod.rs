//! Identifier-aware tokenizer and BM25 artifact/expert indices.

mod bm25;
mod build;
mod tokenize;

pub use bm25::{Bm25Params, DocKind, DocMetadata, IndexDocument, InvertedIndex, ScoredDoc};
pub use build::{
    artifact_documents, artifact_tokens, build_artifact_index, build_artifact_index_with,
    build_expert_index, build_expert_index_with, expert_documents, refresh, BuildOptions,
    DocSource, FieldSelection, IndexPair,
};
pub use tokenize::{is_stopword, tokenize, Arity, Token};

pub const ARTIFACT_INDEX_FILE: &str = "artifact.idx";
pub const EXPERT_INDEX_FILE: &str = "expert.idx";
