//! `nodes.tsv` / `edges.tsv` persistence.
//!
//! ```text
//! nodes.tsv: kind \t local_id \t k=v&k=v
//! edges.tsv: src_kind \t src_id \t etype \t dst_kind \t dst_id \t k=v&k=v
//! ```
//!
//! Ids and attribute pairs are percent-encoded; lines are sorted bytewise.

use std::fs;
use std::path::Path;

use super::schema::NodeId;
use super::store::{Graph, GraphEdge, GraphNode};
use crate::codec::{decode, decode_pairs, encode, encode_pairs};
use crate::{Error, Result};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";

fn join_sorted(mut lines: Vec<String>) -> String {
    lines.sort();
    let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

pub fn nodes_to_string(graph: &Graph) -> String {
    join_sorted(
        graph
            .nodes()
            .map(|(id, attrs)| {
                format!(
                    "{}\t{}\t{}",
                    id.kind(),
                    encode(id.local_id()),
                    encode_pairs(attrs)
                )
            })
            .collect(),
    )
}

pub fn edges_to_string(graph: &Graph) -> String {
    join_sorted(
        graph
            .edges()
            .map(|(src, etype, dst, attrs)| {
                format!(
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    src.kind(),
                    encode(src.local_id()),
                    etype,
                    dst.kind(),
                    encode(dst.local_id()),
                    encode_pairs(attrs)
                )
            })
            .collect(),
    )
}

fn parse_id(kind: &str, id: &str) -> Result<NodeId> {
    NodeId::new(kind.parse()?, decode(id)?)
}

pub fn graph_from_strings(nodes: &str, edges: &str) -> Result<Graph> {
    let mut graph = Graph::new();
    for (n, line) in nodes.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let [kind, id, attrs] = fields[..] else {
            return Err(Error::parse(
                format!("{NODES_FILE}:{}", n + 1),
                format!("expected 3 fields, got {}", fields.len()),
            ));
        };
        let node = GraphNode {
            id: parse_id(kind, id)?,
            attributes: decode_pairs(attrs)?,
        };
        graph.upsert_node(node)?;
    }
    for (n, line) in edges.lines().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let [sk, sid, etype, dk, did, attrs] = fields[..] else {
            return Err(Error::parse(
                format!("{EDGES_FILE}:{}", n + 1),
                format!("expected 6 fields, got {}", fields.len()),
            ));
        };
        let edge = GraphEdge {
            src: parse_id(sk, sid)?,
            dst: parse_id(dk, did)?,
            etype: etype.parse()?,
            attributes: decode_pairs(attrs)?,
        };
        graph.upsert_edge(edge)?;
    }
    Ok(graph)
}

/// Writes via a temporary file and rename so readers never see a torn file.
pub(crate) fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save(graph: &Graph, dir: &Path) -> Result<()> {
    write_atomic(&dir.join(NODES_FILE), &nodes_to_string(graph))?;
    write_atomic(&dir.join(EDGES_FILE), &edges_to_string(graph))
}

pub fn load(dir: &Path) -> Result<Graph> {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    graph_from_strings(&read(NODES_FILE)?, &read(EDGES_FILE)?)
}
