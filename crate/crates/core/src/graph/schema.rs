use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    User,
    PullRequest,
    WorkItem,
    File,
    Repository,
}

impl NodeKind {
    pub const ALL: [NodeKind; 5] = [
        NodeKind::User,
        NodeKind::PullRequest,
        NodeKind::WorkItem,
        NodeKind::File,
        NodeKind::Repository,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::User => "user",
            NodeKind::PullRequest => "pull_request",
            NodeKind::WorkItem => "work_item",
            NodeKind::File => "file",
            NodeKind::Repository => "repository",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse("node kind", format!("unknown kind {s:?}")))
    }
}

/// Identity of a vertex: the `(kind, local_id)` pair is globally unique.
///
/// Renders as `kind:local_id`, e.g. `pull_request:pr-17`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    kind: NodeKind,
    local_id: String,
}

impl NodeId {
    pub fn new(kind: NodeKind, local_id: impl Into<String>) -> Result<Self> {
        let local_id = local_id.into();
        if local_id.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty local id for {kind} node"
            )));
        }
        Ok(NodeId { kind, local_id })
    }

    pub fn user(id: impl Into<String>) -> Self {
        Self::must(NodeKind::User, id)
    }

    pub fn pull_request(id: impl Into<String>) -> Self {
        Self::must(NodeKind::PullRequest, id)
    }

    pub fn work_item(id: impl Into<String>) -> Self {
        Self::must(NodeKind::WorkItem, id)
    }

    pub fn file(id: impl Into<String>) -> Self {
        Self::must(NodeKind::File, id)
    }

    pub fn repository(id: impl Into<String>) -> Self {
        Self::must(NodeKind::Repository, id)
    }

    fn must(kind: NodeKind, id: impl Into<String>) -> Self {
        Self::new(kind, id).expect("node ids must be non-empty")
    }

    pub fn kind(&self) -> NodeKind {
        self.kind
    }

    pub fn local_id(&self) -> &str {
        &self.local_id
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.local_id)
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, id) = s
            .split_once(':')
            .ok_or_else(|| Error::parse("node id", format!("expected kind:id, got {s:?}")))?;
        NodeId::new(kind.parse()?, id)
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    Creates,
    Reviews,
    Changes,
    Contains,
    LinkedTo,
    ParentOf,
    CommentsOn,
    ReportsTo,
}

impl EdgeType {
    pub const ALL: [EdgeType; 8] = [
        EdgeType::Creates,
        EdgeType::Reviews,
        EdgeType::Changes,
        EdgeType::Contains,
        EdgeType::LinkedTo,
        EdgeType::ParentOf,
        EdgeType::CommentsOn,
        EdgeType::ReportsTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeType::Creates => "creates",
            EdgeType::Reviews => "reviews",
            EdgeType::Changes => "changes",
            EdgeType::Contains => "contains",
            EdgeType::LinkedTo => "linked_to",
            EdgeType::ParentOf => "parent_of",
            EdgeType::CommentsOn => "comments_on",
            EdgeType::ReportsTo => "reports_to",
        }
    }

    /// Legal `(source kind, destination kind)` for this edge type.
    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            EdgeType::Creates => (User, PullRequest),
            EdgeType::Reviews => (User, PullRequest),
            EdgeType::Changes => (PullRequest, File),
            EdgeType::Contains => (Repository, PullRequest),
            EdgeType::LinkedTo => (WorkItem, PullRequest),
            EdgeType::ParentOf => (WorkItem, WorkItem),
            EdgeType::CommentsOn => (User, PullRequest),
            EdgeType::ReportsTo => (User, User),
        }
    }

    pub fn admits(self, src: NodeKind, dst: NodeKind) -> bool {
        self.endpoints() == (src, dst)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EdgeType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::parse("edge type", format!("unknown edge type {s:?}")))
    }
}
