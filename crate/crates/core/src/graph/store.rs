use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::schema::{EdgeType, NodeId, NodeKind};
use crate::codec::Attributes;
use crate::{Error, Result};

pub const FILE_TYPES: [&str; 4] = ["source", "configuration", "project", "other"];

/// Default search radius for proximity queries.
pub const DEFAULT_MAX_DEPTH: u32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    #[serde(default)]
    pub attributes: Attributes,
}

impl GraphNode {
    pub fn new(id: NodeId) -> Self {
        GraphNode {
            id,
            attributes: Attributes::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.attributes.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub etype: EdgeType,
    #[serde(default)]
    pub attributes: Attributes,
}

impl GraphEdge {
    pub fn new(src: NodeId, etype: EdgeType, dst: NodeId) -> Self {
        GraphEdge {
            src,
            dst,
            etype,
            attributes: Attributes::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.attributes.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mutation {
    UpsertNode(GraphNode),
    UpsertEdge(GraphEdge),
    DeleteNode(NodeId),
    DeleteEdge {
        src: NodeId,
        dst: NodeId,
        etype: EdgeType,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Applied,
    NoOp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub node_count_by_kind: BTreeMap<NodeKind, usize>,
    pub edge_count_by_type: BTreeMap<EdgeType, usize>,
}

impl GraphStats {
    pub fn node_count(&self) -> usize {
        self.node_count_by_kind.values().sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count_by_type.values().sum()
    }

    pub fn nodes(&self, kind: NodeKind) -> usize {
        self.node_count_by_kind.get(&kind).copied().unwrap_or(0)
    }

    pub fn edges(&self, etype: EdgeType) -> usize {
        self.edge_count_by_type.get(&etype).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct NodeEntry {
    attributes: Attributes,
    out: BTreeSet<(NodeId, EdgeType)>,
    inc: BTreeSet<(NodeId, EdgeType)>,
}

type EdgeKey = (NodeId, EdgeType, NodeId);

/// In-memory socio-technical graph.
///
/// Nodes and edges live in ordered maps so every listing is deterministic;
/// each node also keeps its in/out adjacency for traversal.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    nodes: BTreeMap<NodeId, NodeEntry>,
    edges: BTreeMap<EdgeKey, Attributes>,
}

fn validate_attributes(attrs: &Attributes) -> Result<()> {
    for key in attrs.keys() {
        let mut chars = key.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
            && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "attribute key {key:?} is not a lowercase identifier"
            )));
        }
    }
    Ok(())
}

/// Merges `update` into `target` (last writer wins per key); true if anything changed.
fn merge(target: &mut Attributes, update: &Attributes) -> bool {
    let mut changed = false;
    for (k, v) in update {
        if target.get(k) != Some(v) {
            target.insert(k.clone(), v.clone());
            changed = true;
        }
    }
    changed
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, mutation: Mutation) -> Result<Outcome> {
        match mutation {
            Mutation::UpsertNode(node) => self.upsert_node(node),
            Mutation::UpsertEdge(edge) => self.upsert_edge(edge),
            Mutation::DeleteNode(id) => Ok(self.delete_node(&id)),
            Mutation::DeleteEdge { src, dst, etype } => Ok(self.delete_edge(&src, etype, &dst)),
        }
    }

    pub fn upsert_node(&mut self, node: GraphNode) -> Result<Outcome> {
        validate_attributes(&node.attributes)?;
        if node.id.kind() == NodeKind::File {
            if let Some(ft) = node.attributes.get("file_type") {
                if !FILE_TYPES.contains(&ft.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "file_type {ft:?} not one of {FILE_TYPES:?}"
                    )));
                }
            }
        }
        match self.nodes.get_mut(&node.id) {
            Some(entry) => Ok(if merge(&mut entry.attributes, &node.attributes) {
                Outcome::Applied
            } else {
                Outcome::NoOp
            }),
            None => {
                self.nodes.insert(
                    node.id,
                    NodeEntry {
                        attributes: node.attributes,
                        ..NodeEntry::default()
                    },
                );
                Ok(Outcome::Applied)
            }
        }
    }

    /// Missing endpoints are created with empty attributes.
    pub fn upsert_edge(&mut self, edge: GraphEdge) -> Result<Outcome> {
        let (src_kind, dst_kind) = (edge.src.kind(), edge.dst.kind());
        if !edge.etype.admits(src_kind, dst_kind) {
            return Err(Error::Schema {
                src: edge.src,
                dst: edge.dst,
                etype: edge.etype,
                src_kind,
                dst_kind,
            });
        }
        validate_attributes(&edge.attributes)?;

        let mut outcome = Outcome::NoOp;
        for id in [&edge.src, &edge.dst] {
            if !self.nodes.contains_key(id) {
                self.nodes.insert(id.clone(), NodeEntry::default());
                outcome = Outcome::Applied;
            }
        }

        let key = (edge.src.clone(), edge.etype, edge.dst.clone());
        match self.edges.get_mut(&key) {
            Some(attrs) => {
                if merge(attrs, &edge.attributes) {
                    outcome = Outcome::Applied;
                }
            }
            None => {
                self.edges.insert(key, edge.attributes);
                self.nodes
                    .get_mut(&edge.src)
                    .expect("endpoint inserted above")
                    .out
                    .insert((edge.dst.clone(), edge.etype));
                self.nodes
                    .get_mut(&edge.dst)
                    .expect("endpoint inserted above")
                    .inc
                    .insert((edge.src, edge.etype));
                outcome = Outcome::Applied;
            }
        }
        Ok(outcome)
    }

    /// Removes the node and every incident edge.
    pub fn delete_node(&mut self, id: &NodeId) -> Outcome {
        let Some(entry) = self.nodes.remove(id) else {
            return Outcome::NoOp;
        };
        for (dst, etype) in entry.out {
            self.edges.remove(&(id.clone(), etype, dst.clone()));
            if let Some(other) = self.nodes.get_mut(&dst) {
                other.inc.remove(&(id.clone(), etype));
            }
        }
        for (src, etype) in entry.inc {
            self.edges.remove(&(src.clone(), etype, id.clone()));
            if let Some(other) = self.nodes.get_mut(&src) {
                other.out.remove(&(id.clone(), etype));
            }
        }
        Outcome::Applied
    }

    pub fn delete_edge(&mut self, src: &NodeId, etype: EdgeType, dst: &NodeId) -> Outcome {
        if self
            .edges
            .remove(&(src.clone(), etype, dst.clone()))
            .is_none()
        {
            return Outcome::NoOp;
        }
        if let Some(e) = self.nodes.get_mut(src) {
            e.out.remove(&(dst.clone(), etype));
        }
        if let Some(e) = self.nodes.get_mut(dst) {
            e.inc.remove(&(src.clone(), etype));
        }
        Outcome::Applied
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn node(&self, id: &NodeId) -> Option<GraphNode> {
        self.nodes.get(id).map(|e| GraphNode {
            id: id.clone(),
            attributes: e.attributes.clone(),
        })
    }

    pub fn attributes(&self, id: &NodeId) -> Option<&Attributes> {
        self.nodes.get(id).map(|e| &e.attributes)
    }

    pub fn attribute(&self, id: &NodeId, key: &str) -> Option<&str> {
        self.attributes(id)?.get(key).map(String::as_str)
    }

    pub fn edge_attributes(
        &self,
        src: &NodeId,
        etype: EdgeType,
        dst: &NodeId,
    ) -> Option<&Attributes> {
        self.edges.get(&(src.clone(), etype, dst.clone()))
    }

    pub fn has_edge(&self, src: &NodeId, etype: EdgeType, dst: &NodeId) -> bool {
        self.edge_attributes(src, etype, dst).is_some()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys().filter(move |id| id.kind() == kind)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&NodeId, &Attributes)> {
        self.nodes.iter().map(|(id, e)| (id, &e.attributes))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&NodeId, EdgeType, &NodeId, &Attributes)> {
        self.edges
            .iter()
            .map(|((s, t, d), attrs)| (s, *t, d, attrs))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Incident edges matching the filter, sorted by neighbour id then edge type.
    pub fn neighbors(
        &self,
        id: &NodeId,
        etype: Option<EdgeType>,
        direction: Direction,
    ) -> Result<Vec<(NodeId, EdgeType)>> {
        let entry = self
            .nodes
            .get(id)
            .ok_or_else(|| Error::NotFound(id.clone()))?;
        let keep = |t: &EdgeType| etype.is_none_or(|want| want == *t);
        let mut out: Vec<(NodeId, EdgeType)> = Vec::new();
        if matches!(direction, Direction::Out | Direction::Both) {
            out.extend(entry.out.iter().filter(|(_, t)| keep(t)).cloned());
        }
        if matches!(direction, Direction::In | Direction::Both) {
            out.extend(entry.inc.iter().filter(|(_, t)| keep(t)).cloned());
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Convenience: ids reachable over one edge of `etype` in `direction`.
    pub fn adjacent(&self, id: &NodeId, etype: EdgeType, direction: Direction) -> Vec<NodeId> {
        self.neighbors(id, Some(etype), direction)
            .map(|v| v.into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default()
    }

    /// Undirected shortest-path length, or `None` when `b` is not within `max_depth` hops.
    pub fn proximity(&self, a: &NodeId, b: &NodeId, max_depth: u32) -> Result<Option<u32>> {
        if max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        for id in [a, b] {
            if !self.nodes.contains_key(id) {
                return Err(Error::NotFound(id.clone()));
            }
        }
        if a == b {
            return Ok(Some(0));
        }
        let mut seen: HashMap<&NodeId, u32> = HashMap::from([(a, 0)]);
        let mut queue = VecDeque::from([a]);
        while let Some(cur) = queue.pop_front() {
            let depth = seen[cur];
            if depth >= max_depth {
                continue;
            }
            for next in self.undirected(cur) {
                if seen.contains_key(next) {
                    continue;
                }
                if next == b {
                    return Ok(Some(depth + 1));
                }
                seen.insert(next, depth + 1);
                queue.push_back(next);
            }
        }
        Ok(None)
    }

    /// Distances from `source` to every node within `max_depth` (source included at 0).
    pub fn distances_from(&self, source: &NodeId, max_depth: u32) -> Result<HashMap<NodeId, u32>> {
        if !self.nodes.contains_key(source) {
            return Err(Error::NotFound(source.clone()));
        }
        let mut seen: HashMap<&NodeId, u32> = HashMap::from([(source, 0)]);
        let mut queue = VecDeque::from([source]);
        while let Some(cur) = queue.pop_front() {
            let depth = seen[cur];
            if depth >= max_depth {
                continue;
            }
            for next in self.undirected(cur) {
                if !seen.contains_key(next) {
                    seen.insert(next, depth + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(seen.into_iter().map(|(k, v)| (k.clone(), v)).collect())
    }

    fn undirected<'a>(&'a self, id: &NodeId) -> impl Iterator<Item = &'a NodeId> + 'a {
        let entry = &self.nodes[id];
        entry.out.iter().chain(entry.inc.iter()).map(|(n, _)| n)
    }

    pub fn stats(&self) -> GraphStats {
        let mut stats = GraphStats::default();
        for id in self.nodes.keys() {
            *stats.node_count_by_kind.entry(id.kind()).or_default() += 1;
        }
        for (_, etype, _) in self.edges.keys() {
            *stats.edge_count_by_type.entry(*etype).or_default() += 1;
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn creates(u: &str, pr: &str) -> Mutation {
        Mutation::UpsertEdge(GraphEdge::new(
            NodeId::user(u),
            EdgeType::Creates,
            NodeId::pull_request(pr),
        ))
    }

    #[test]
    fn upsert_node_on_empty_graph() {
        let mut g = Graph::new();
        let out = g
            .apply(Mutation::UpsertNode(GraphNode::new(NodeId::user("u1"))))
            .unwrap();
        assert_eq!(out, Outcome::Applied);
        assert_eq!(g.stats().nodes(NodeKind::User), 1);
    }

    #[test]
    fn edge_upsert_is_idempotent() {
        let mut g = Graph::new();
        assert_eq!(g.apply(creates("u1", "pr1")).unwrap(), Outcome::Applied);
        assert_eq!(g.apply(creates("u1", "pr1")).unwrap(), Outcome::NoOp);
        assert_eq!(g.edge_count(), 1);
        // endpoints were created implicitly
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn linked_to_edge() {
        let mut g = Graph::new();
        let m = Mutation::UpsertEdge(GraphEdge::new(
            NodeId::work_item("wi1"),
            EdgeType::LinkedTo,
            NodeId::pull_request("pr1"),
        ));
        assert_eq!(g.apply(m).unwrap(), Outcome::Applied);
        assert_eq!(g.stats().edges(EdgeType::LinkedTo), 1);
    }

    #[test]
    fn schema_violation_names_triple() {
        let mut g = Graph::new();
        let err = g
            .apply(Mutation::UpsertEdge(GraphEdge::new(
                NodeId::pull_request("pr1"),
                EdgeType::LinkedTo,
                NodeId::work_item("wi1"),
            )))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("linked_to"), "{msg}");
        assert!(msg.contains("pull_request:pr1"), "{msg}");
        assert!(msg.contains("work_item:wi1"), "{msg}");
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn attribute_merge_last_writer_wins() {
        let mut g = Graph::new();
        let pr = NodeId::pull_request("pr1");
        g.apply(creates("u1", "pr1")).unwrap();
        let n = GraphNode::new(pr.clone())
            .with("title", "a")
            .with("state", "active");
        assert_eq!(g.upsert_node(n.clone()).unwrap(), Outcome::Applied);
        assert_eq!(g.upsert_node(n).unwrap(), Outcome::NoOp);
        let n2 = GraphNode::new(pr.clone()).with("state", "completed");
        assert_eq!(g.upsert_node(n2).unwrap(), Outcome::Applied);
        assert_eq!(g.attribute(&pr, "title"), Some("a"));
        assert_eq!(g.attribute(&pr, "state"), Some("completed"));
    }

    #[test]
    fn bad_attribute_keys_rejected() {
        let mut g = Graph::new();
        let n = GraphNode::new(NodeId::user("u")).with("Title", "x");
        assert!(g.upsert_node(n).is_err());
        let f = GraphNode::new(NodeId::file("f")).with("file_type", "binary");
        assert!(g.upsert_node(f).is_err());
    }

    #[test]
    fn delete_node_removes_incident_edges() {
        let mut g = Graph::new();
        g.apply(creates("u1", "pr1")).unwrap();
        g.apply(creates("u1", "pr2")).unwrap();
        assert_eq!(g.delete_node(&NodeId::user("u1")), Outcome::Applied);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.node_count(), 2);
        assert!(g
            .neighbors(&NodeId::pull_request("pr1"), None, Direction::Both)
            .unwrap()
            .is_empty());
        assert_eq!(g.delete_node(&NodeId::user("u1")), Outcome::NoOp);
    }

    #[test]
    fn delete_edge() {
        let mut g = Graph::new();
        g.apply(creates("u1", "pr1")).unwrap();
        let m = Mutation::DeleteEdge {
            src: NodeId::user("u1"),
            dst: NodeId::pull_request("pr1"),
            etype: EdgeType::Creates,
        };
        assert_eq!(g.apply(m.clone()).unwrap(), Outcome::Applied);
        assert_eq!(g.apply(m).unwrap(), Outcome::NoOp);
        assert_eq!(g.node_count(), 2);
    }

    #[test]
    fn neighbors_readback() {
        let mut g = Graph::new();
        let pr = NodeId::pull_request("pr1");
        for f in ["f2", "f1"] {
            g.upsert_edge(GraphEdge::new(
                pr.clone(),
                EdgeType::Changes,
                NodeId::file(f),
            ))
            .unwrap();
        }
        g.apply(creates("u1", "pr1")).unwrap();
        let out = g
            .neighbors(&pr, Some(EdgeType::Changes), Direction::Out)
            .unwrap();
        assert_eq!(
            out,
            vec![
                (NodeId::file("f1"), EdgeType::Changes),
                (NodeId::file("f2"), EdgeType::Changes)
            ]
        );
        let all = g.neighbors(&pr, None, Direction::Both).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].0, NodeId::user("u1"));
    }

    #[test]
    fn neighbors_isolated_and_unknown() {
        let mut g = Graph::new();
        g.upsert_node(GraphNode::new(NodeId::user("u1"))).unwrap();
        assert!(g
            .neighbors(&NodeId::user("u1"), None, Direction::Both)
            .unwrap()
            .is_empty());
        assert!(matches!(
            g.neighbors(&NodeId::user("nobody"), None, Direction::Both),
            Err(Error::NotFound(_))
        ));
    }

    #[test]
    fn proximity_examples() {
        let mut g = Graph::new();
        g.apply(creates("u1", "pr1")).unwrap();
        g.apply(creates("u2", "pr2")).unwrap();
        for pr in ["pr1", "pr2"] {
            g.upsert_edge(GraphEdge::new(
                NodeId::work_item("wi1"),
                EdgeType::LinkedTo,
                NodeId::pull_request(pr),
            ))
            .unwrap();
        }
        let (u1, u2) = (NodeId::user("u1"), NodeId::user("u2"));
        assert_eq!(g.proximity(&u1, &u1, 6).unwrap(), Some(0));
        assert_eq!(
            g.proximity(&u1, &NodeId::pull_request("pr1"), 6).unwrap(),
            Some(1)
        );
        assert_eq!(g.proximity(&u1, &u2, 6).unwrap(), Some(4));
        assert_eq!(g.proximity(&u2, &u1, 6).unwrap(), Some(4));
        assert_eq!(g.proximity(&u1, &u2, 3).unwrap(), None);
        assert!(g.proximity(&u1, &u2, 0).is_err());
        assert!(g.proximity(&u1, &NodeId::user("x"), 6).is_err());
    }

    #[test]
    fn stats_counts() {
        let mut g = Graph::new();
        assert_eq!(g.stats().node_count(), 0);
        assert_eq!(g.stats().edge_count(), 0);
        g.upsert_node(GraphNode::new(NodeId::user("a"))).unwrap();
        g.upsert_node(GraphNode::new(NodeId::user("b"))).unwrap();
        g.apply(creates("a", "pr1")).unwrap();
        let s = g.stats();
        assert_eq!(s.node_count(), 3);
        assert_eq!(s.edge_count(), 1);
    }
}
