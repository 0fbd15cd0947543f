use std::path::PathBuf;

use crate::graph::{EdgeType, NodeId, NodeKind};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(
        "schema violation: {etype} edge cannot connect {src_kind} -> {dst_kind} ({src} -> {dst})"
    )]
    Schema {
        src: NodeId,
        dst: NodeId,
        etype: EdgeType,
        src_kind: NodeKind,
        dst_kind: NodeKind,
    },

    #[error("node not found: {0}")]
    NotFound(NodeId),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal registry transition for {file}: {from} -> {to}")]
    RegistryTransition {
        file: String,
        from: String,
        to: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
