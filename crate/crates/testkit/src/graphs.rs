use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use sociograph_core::graph::{EdgeType, Graph, GraphEdge, GraphNode, NodeId, NodeKind};

pub type NodeSet = BTreeSet<(String, Vec<(String, String)>)>;
pub type EdgeSet = BTreeSet<(String, String, String, Vec<(String, String)>)>;

/// Nodes and edges, attributes included, as plain ordered sets.
pub fn graph_sets(g: &Graph) -> (NodeSet, EdgeSet) {
    let nodes = g
        .nodes()
        .map(|(id, attrs)| {
            (
                id.to_string(),
                attrs.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            )
        })
        .collect();
    let edges = g
        .edges()
        .map(|(s, t, d, attrs)| {
            (
                s.to_string(),
                t.to_string(),
                d.to_string(),
                attrs.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            )
        })
        .collect();
    (nodes, edges)
}

/// First difference between two graphs, if any, described for a failure message.
pub fn graph_difference(actual: &Graph, expected: &Graph) -> Option<String> {
    let (an, ae) = graph_sets(actual);
    let (en, ee) = graph_sets(expected);
    if let Some(n) = an.symmetric_difference(&en).next() {
        let side = if an.contains(n) {
            "unexpected"
        } else {
            "missing"
        };
        return Some(format!(
            "{side} node {n:?} ({} vs {} nodes)",
            an.len(),
            en.len()
        ));
    }
    if let Some(e) = ae.symmetric_difference(&ee).next() {
        let side = if ae.contains(e) {
            "unexpected"
        } else {
            "missing"
        };
        return Some(format!(
            "{side} edge {e:?} ({} vs {} edges)",
            ae.len(),
            ee.len()
        ));
    }
    None
}

const EDGE_TYPES: [EdgeType; 8] = [
    EdgeType::Creates,
    EdgeType::Reviews,
    EdgeType::CommentsOn,
    EdgeType::Changes,
    EdgeType::Contains,
    EdgeType::LinkedTo,
    EdgeType::ParentOf,
    EdgeType::ReportsTo,
];

/// A random schema-valid graph with at most `max_nodes` nodes. Some nodes
/// stay isolated so that unreachable pairs occur.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> Graph {
    let n = rng.gen_range(2..=max_nodes.max(2));
    let mut by_kind: BTreeMap<NodeKind, Vec<NodeId>> = BTreeMap::new();
    let mut g = Graph::new();
    for i in 0..n {
        let id = match rng.gen_range(0..5) {
            0 => NodeId::user(format!("u{i}")),
            1 => NodeId::pull_request(format!("{i}")),
            2 => NodeId::work_item(format!("{i}")),
            3 => NodeId::file(format!("f{i}.rs")),
            _ => NodeId::repository(format!("r{i}")),
        };
        g.upsert_node(GraphNode::new(id.clone()))
            .expect("node insert");
        by_kind.entry(id.kind()).or_default().push(id);
    }
    let density: f64 = rng.gen_range(0.3..2.0);
    let edges = (n as f64 * density) as usize;
    for _ in 0..edges {
        let etype = *EDGE_TYPES.choose(rng).unwrap();
        let (sk, dk) = etype.endpoints();
        let (Some(srcs), Some(dsts)) = (by_kind.get(&sk), by_kind.get(&dk)) else {
            continue;
        };
        let src = srcs.choose(rng).unwrap().clone();
        let dst = dsts.choose(rng).unwrap().clone();
        if src == dst {
            continue;
        }
        g.upsert_edge(GraphEdge::new(src, etype, dst))
            .expect("schema-valid edge");
    }
    g
}

/// Hop distances from `source` to every node, ignoring edge direction,
/// computed by repeated relaxation over the edge list until nothing changes.
pub fn relaxation_distances(g: &Graph, source: &NodeId) -> BTreeMap<NodeId, u32> {
    let pairs: Vec<(NodeId, NodeId)> = g
        .edges()
        .map(|(s, _, d, _)| (s.clone(), d.clone()))
        .collect();
    let mut dist: BTreeMap<NodeId, u32> = BTreeMap::from([(source.clone(), 0)]);
    loop {
        let mut changed = false;
        for (a, b) in &pairs {
            for (from, to) in [(a, b), (b, a)] {
                if let Some(&d) = dist.get(from) {
                    let better = dist.get(to).is_none_or(|&cur| d + 1 < cur);
                    if better {
                        dist.insert(to.clone(), d + 1);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return dist;
        }
    }
}

/// Oracle for bounded proximity between two nodes.
pub fn brute_proximity(g: &Graph, a: &NodeId, b: &NodeId, max_depth: u32) -> Option<u32> {
    relaxation_distances(g, a)
        .get(b)
        .copied()
        .filter(|&d| d <= max_depth)
}
