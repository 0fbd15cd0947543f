//! Event records and their translation into graph mutations.
//!
//! CSV layout: `event_id,repo,event_kind,timestamp,payload` where the payload
//! is `key=value` pairs joined by `&` (percent-encoded).
//!
//! | event_kind         | required payload keys | graph effect                                   |
//! |--------------------|-----------------------|------------------------------------------------|
//! | `pr_created`       | `pr`, `author`        | repo, PR and author nodes; creates + contains   |
//! | `pr_updated`       | `pr`                  | PR title/description/updated_at                 |
//! | `pr_state_changed` | `pr`, `state`         | PR state                                        |
//! | `review_assigned`  | `pr`, `reviewer`      | reviews edge                                    |
//! | `review_commented` | `pr`, `user`          | comments_on edge                                |
//! | `file_changed`     | `pr`, `path`          | file node (`<repo>/<path>`) and changes edge    |
//! | `wi_created`       | `wi`                  | work item node                                  |
//! | `wi_linked`        | `wi`, `pr`            | linked_to edge                                  |
//! | `wi_parented`      | `parent`, `child`     | parent_of edge                                  |
//! | `user_reports_to`  | `user`, `manager`     | reports_to edge                                 |

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{decode_pairs, encode_pairs, format_ts, parse_ts, Attributes};
use crate::graph::{EdgeType, Graph, GraphEdge, GraphNode, Mutation, NodeId};
use crate::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["event_id", "repo", "event_kind", "timestamp", "payload"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PrCreated,
    PrUpdated,
    PrStateChanged,
    ReviewAssigned,
    ReviewCommented,
    FileChanged,
    WiCreated,
    WiLinked,
    WiParented,
    UserReportsTo,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::PrCreated,
        EventKind::PrUpdated,
        EventKind::PrStateChanged,
        EventKind::ReviewAssigned,
        EventKind::ReviewCommented,
        EventKind::FileChanged,
        EventKind::WiCreated,
        EventKind::WiLinked,
        EventKind::WiParented,
        EventKind::UserReportsTo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PrCreated => "pr_created",
            EventKind::PrUpdated => "pr_updated",
            EventKind::PrStateChanged => "pr_state_changed",
            EventKind::ReviewAssigned => "review_assigned",
            EventKind::ReviewCommented => "review_commented",
            EventKind::FileChanged => "file_changed",
            EventKind::WiCreated => "wi_created",
            EventKind::WiLinked => "wi_linked",
            EventKind::WiParented => "wi_parented",
            EventKind::UserReportsTo => "user_reports_to",
        }
    }

    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            EventKind::PrCreated => &["pr", "author"],
            EventKind::PrUpdated => &["pr"],
            EventKind::PrStateChanged => &["pr", "state"],
            EventKind::ReviewAssigned => &["pr", "reviewer"],
            EventKind::ReviewCommented => &["pr", "user"],
            EventKind::FileChanged => &["pr", "path"],
            EventKind::WiCreated => &["wi"],
            EventKind::WiLinked => &["wi", "pr"],
            EventKind::WiParented => &["parent", "child"],
            EventKind::UserReportsTo => &["user", "manager"],
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::parse("event kind", format!("unknown event kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    pub repo: String,
    pub event_kind: EventKind,
    pub timestamp: DateTime<Utc>,
    pub payload: Attributes,
}

/// Classifies a path into one of the file types tracked on File nodes.
pub fn classify_file(path: &str) -> &'static str {
    let name = path.rsplit('/').next().unwrap_or(path).to_ascii_lowercase();
    const PROJECT_NAMES: [&str; 8] = [
        "cargo.toml",
        "package.json",
        "pom.xml",
        "makefile",
        "cmakelists.txt",
        "build.gradle",
        "setup.py",
        "go.mod",
    ];
    if PROJECT_NAMES.contains(&name.as_str()) {
        return "project";
    }
    let ext = name.rsplit_once('.').map(|(_, e)| e).unwrap_or("");
    match ext {
        "csproj" | "vcxproj" | "sln" | "props" | "targets" | "proj" => "project",
        "json" | "yaml" | "yml" | "toml" | "ini" | "xml" | "config" | "cfg" | "conf" | "env" => {
            "configuration"
        }
        "rs" | "c" | "h" | "cc" | "cpp" | "hpp" | "cs" | "java" | "kt" | "js" | "ts" | "tsx"
        | "py" | "go" | "rb" | "swift" | "scala" | "sql" | "sh" | "ps1" | "fs" => "source",
        _ => "other",
    }
}

impl EventRecord {
    pub fn new(
        event_id: impl Into<String>,
        repo: impl Into<String>,
        event_kind: EventKind,
        timestamp: DateTime<Utc>,
    ) -> Self {
        EventRecord {
            event_id: event_id.into(),
            repo: repo.into(),
            event_kind,
            timestamp,
            payload: Attributes::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.payload.insert(key.to_string(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.payload
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            Error::parse(
                format!("event {}", self.event_id),
                format!("{} requires payload key {key:?}", self.event_kind),
            )
        })
    }

    /// Checks the row against the validation table without touching a graph.
    pub fn validate(&self) -> Result<()> {
        if self.event_id.is_empty() {
            return Err(Error::parse("event", "empty event_id"));
        }
        if self.repo.is_empty() {
            return Err(Error::parse(
                format!("event {}", self.event_id),
                "empty repo",
            ));
        }
        for key in self.event_kind.required_keys() {
            self.require(key)?;
        }
        if self.event_kind == EventKind::FileChanged {
            if let Some(ft) = self.get("file_type") {
                if !crate::graph::FILE_TYPES.contains(&ft) {
                    return Err(Error::parse(
                        format!("event {}", self.event_id),
                        format!("unknown file_type {ft:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The PR or work item this event is about, if any.
    pub fn subject(&self) -> Option<NodeId> {
        match self.event_kind {
            EventKind::PrCreated
            | EventKind::PrUpdated
            | EventKind::PrStateChanged
            | EventKind::ReviewAssigned
            | EventKind::ReviewCommented
            | EventKind::FileChanged => self.get("pr").map(NodeId::pull_request),
            EventKind::WiCreated | EventKind::WiLinked => self.get("wi").map(NodeId::work_item),
            EventKind::WiParented => self.get("child").map(NodeId::work_item),
            EventKind::UserReportsTo => None,
        }
    }

    /// The user who performed the event when the payload names one.
    pub fn actor(&self) -> Option<NodeId> {
        let key = match self.event_kind {
            EventKind::PrCreated => "author",
            EventKind::ReviewAssigned => "reviewer",
            EventKind::ReviewCommented | EventKind::UserReportsTo => "user",
            EventKind::WiCreated => "author",
            _ => "actor",
        };
        self.get(key)
            .or_else(|| self.get("actor"))
            .map(NodeId::user)
    }

    pub fn mutations(&self) -> Result<Vec<Mutation>> {
        self.validate()?;
        let ts = format_ts(&self.timestamp);
        let repo = NodeId::repository(self.repo.clone());
        let stamp = |e: GraphEdge| e.with("timestamp", ts.clone());
        let mut out = Vec::new();

        let pr_touch = |pr: &NodeId, out: &mut Vec<Mutation>| {
            out.push(Mutation::UpsertNode(
                GraphNode::new(pr.clone())
                    .with("repository", self.repo.clone())
                    .with("updated_at", ts.clone()),
            ));
            out.push(Mutation::UpsertEdge(GraphEdge::new(
                repo.clone(),
                EdgeType::Contains,
                pr.clone(),
            )));
        };
        let copy = |node: &mut GraphNode, keys: &[&str]| {
            for k in keys {
                if let Some(v) = self.get(k) {
                    node.attributes.insert(k.to_string(), v.to_string());
                }
            }
        };

        match self.event_kind {
            EventKind::PrCreated => {
                let pr = NodeId::pull_request(self.require("pr")?);
                let author = NodeId::user(self.require("author")?);
                let mut repo_node = GraphNode::new(repo.clone()).with("name", self.repo.clone());
                copy(&mut repo_node, &["organization", "project"]);
                out.push(Mutation::UpsertNode(repo_node));
                let mut pr_node = GraphNode::new(pr.clone())
                    .with("created_at", ts.clone())
                    .with("updated_at", ts.clone())
                    .with("repository", self.repo.clone())
                    .with("state", self.get("state").unwrap_or("active"));
                copy(
                    &mut pr_node,
                    &["title", "description", "organization", "project", "url"],
                );
                out.push(Mutation::UpsertNode(pr_node));
                let mut user = GraphNode::new(author.clone());
                if let Some(name) = self.get("author_name") {
                    user.attributes.insert("name".into(), name.into());
                }
                out.push(Mutation::UpsertNode(user));
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    author,
                    EdgeType::Creates,
                    pr.clone(),
                ))));
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    repo.clone(),
                    EdgeType::Contains,
                    pr,
                ))));
            }
            EventKind::PrUpdated => {
                let pr = NodeId::pull_request(self.require("pr")?);
                pr_touch(&pr, &mut out);
                let mut node = GraphNode::new(pr);
                copy(&mut node, &["title", "description"]);
                out.push(Mutation::UpsertNode(node));
            }
            EventKind::PrStateChanged => {
                let pr = NodeId::pull_request(self.require("pr")?);
                pr_touch(&pr, &mut out);
                out.push(Mutation::UpsertNode(
                    GraphNode::new(pr).with("state", self.require("state")?),
                ));
            }
            EventKind::ReviewAssigned => {
                let pr = NodeId::pull_request(self.require("pr")?);
                pr_touch(&pr, &mut out);
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    NodeId::user(self.require("reviewer")?),
                    EdgeType::Reviews,
                    pr,
                ))));
            }
            EventKind::ReviewCommented => {
                let pr = NodeId::pull_request(self.require("pr")?);
                pr_touch(&pr, &mut out);
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    NodeId::user(self.require("user")?),
                    EdgeType::CommentsOn,
                    pr,
                ))));
            }
            EventKind::FileChanged => {
                let pr = NodeId::pull_request(self.require("pr")?);
                pr_touch(&pr, &mut out);
                let path = self.require("path")?;
                let file = NodeId::file(format!("{}/{}", self.repo, path));
                let file_type = self.get("file_type").unwrap_or_else(|| classify_file(path));
                out.push(Mutation::UpsertNode(
                    GraphNode::new(file.clone())
                        .with("path", path)
                        .with("repository", self.repo.clone())
                        .with("file_type", file_type),
                ));
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    pr,
                    EdgeType::Changes,
                    file,
                ))));
            }
            EventKind::WiCreated => {
                let wi = NodeId::work_item(self.require("wi")?);
                let mut node = GraphNode::new(wi)
                    .with("created_at", ts.clone())
                    .with("updated_at", ts.clone())
                    .with("repository", self.repo.clone())
                    .with("state", self.get("state").unwrap_or("active"));
                copy(
                    &mut node,
                    &["title", "description", "organization", "project", "url"],
                );
                if let Some(owner) = self.get("author") {
                    node.attributes.insert("owner".into(), owner.into());
                }
                out.push(Mutation::UpsertNode(node));
            }
            EventKind::WiLinked => {
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    NodeId::work_item(self.require("wi")?),
                    EdgeType::LinkedTo,
                    NodeId::pull_request(self.require("pr")?),
                ))));
            }
            EventKind::WiParented => {
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    NodeId::work_item(self.require("parent")?),
                    EdgeType::ParentOf,
                    NodeId::work_item(self.require("child")?),
                ))));
            }
            EventKind::UserReportsTo => {
                let user = NodeId::user(self.require("user")?);
                let manager = NodeId::user(self.require("manager")?);
                for (id, key) in [(&user, "user_name"), (&manager, "manager_name")] {
                    if let Some(name) = self.get(key) {
                        out.push(Mutation::UpsertNode(
                            GraphNode::new(id.clone()).with("name", name),
                        ));
                    }
                }
                out.push(Mutation::UpsertEdge(stamp(GraphEdge::new(
                    user,
                    EdgeType::ReportsTo,
                    manager,
                ))));
            }
        }
        Ok(out)
    }

    pub fn apply_to(&self, graph: &mut Graph) -> Result<()> {
        for m in self.mutations()? {
            graph.apply(m)?;
        }
        Ok(())
    }
}

/// Chronological order used everywhere events are replayed.
pub fn sort_chronologically(events: &mut [EventRecord]) {
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.event_id.cmp(&b.event_id))
    });
}

/// Builds a graph by replaying `events` in chronological order.
pub fn replay(events: &[EventRecord]) -> Result<Graph> {
    let mut sorted = events.to_vec();
    sort_chronologically(&mut sorted);
    let mut graph = Graph::new();
    for e in &sorted {
        e.apply_to(&mut graph)?;
    }
    Ok(graph)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub file: String,
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedEvents {
    pub events: Vec<EventRecord>,
    pub errors: Vec<RowError>,
}

/// Parses an events CSV. Bad rows are collected, not fatal; a bad header is.
pub fn parse_events<R: Read>(source_name: &str, reader: R) -> Result<ParsedEvents> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut parsed = ParsedEvents::default();
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(parsed),
        Some(Ok(header)) => {
            if header.iter().ne(CSV_HEADER) {
                return Err(Error::parse(
                    source_name,
                    format!("bad header {:?}", header.iter().collect::<Vec<_>>()),
                ));
            }
        }
        Some(Err(e)) => return Err(Error::parse(source_name, e.to_string())),
    }
    for rec in records {
        let (line, result) = match rec {
            Ok(r) => (
                r.position().map(|p| p.line()).unwrap_or(0),
                row_to_event(&r),
            ),
            Err(e) => (
                e.position().map(|p| p.line()).unwrap_or(0),
                Err(Error::parse(source_name, e.to_string())),
            ),
        };
        match result {
            Ok(ev) => parsed.events.push(ev),
            Err(e) => parsed.errors.push(RowError {
                file: source_name.to_string(),
                line,
                message: e.to_string(),
            }),
        }
    }
    Ok(parsed)
}

fn row_to_event(r: &csv::StringRecord) -> Result<EventRecord> {
    if r.len() != 5 {
        return Err(Error::parse(
            "event row",
            format!("expected 5 fields, got {}", r.len()),
        ));
    }
    let ev = EventRecord {
        event_id: r[0].to_string(),
        repo: r[1].to_string(),
        event_kind: r[2].parse()?,
        timestamp: parse_ts(&r[3])?,
        payload: decode_pairs(&r[4])?,
    };
    ev.validate()?;
    Ok(ev)
}

pub fn read_events_file(path: &Path) -> Result<ParsedEvents> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_events(&name, std::io::BufReader::new(file))
}

pub fn write_events<W: Write>(writer: W, events: &[EventRecord]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let ctx = |e: csv::Error| Error::parse("events csv", e.to_string());
    wtr.write_record(CSV_HEADER).map_err(ctx)?;
    for ev in events {
        wtr.write_record([
            ev.event_id.as_str(),
            ev.repo.as_str(),
            ev.event_kind.as_str(),
            &format_ts(&ev.timestamp),
            &encode_pairs(&ev.payload),
        ])
        .map_err(ctx)?;
    }
    wtr.flush()
        .map_err(|e| Error::parse("events csv", e.to_string()))
}

pub fn write_events_file(path: &Path, events: &[EventRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_events(&mut buf, events)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_ts(s).unwrap()
    }

    fn pr_created(id: &str, pr: &str, author: &str) -> EventRecord {
        EventRecord::new(
            id,
            "repoA",
            EventKind::PrCreated,
            ts("2024-01-01T00:00:00Z"),
        )
        .with("pr", pr)
        .with("author", author)
        .with("title", "Fix ImapTransfer bug")
    }

    #[test]
    fn pr_created_builds_repo_pr_author() {
        let mut g = Graph::new();
        pr_created("e1", "pr1", "alice").apply_to(&mut g).unwrap();
        let s = g.stats();
        assert_eq!(s.nodes(NodeKind::Repository), 1);
        assert_eq!(s.nodes(NodeKind::PullRequest), 1);
        assert_eq!(s.nodes(NodeKind::User), 1);
        assert_eq!(s.edges(EdgeType::Creates), 1);
        assert_eq!(s.edges(EdgeType::Contains), 1);
        let pr = NodeId::pull_request("pr1");
        assert_eq!(g.attribute(&pr, "created_at"), Some("2024-01-01T00:00:00Z"));
        assert_eq!(g.attribute(&pr, "state"), Some("active"));
    }

    #[test]
    fn file_changed_classifies() {
        let mut g = Graph::new();
        EventRecord::new("e", "r", EventKind::FileChanged, ts("2024-01-01T00:00:00Z"))
            .with("pr", "p")
            .with("path", "src/app.config")
            .apply_to(&mut g)
            .unwrap();
        let f = NodeId::file("r/src/app.config");
        assert_eq!(g.attribute(&f, "file_type"), Some("configuration"));
        assert_eq!(classify_file("a/Cargo.toml"), "project");
        assert_eq!(classify_file("x.csproj"), "project");
        assert_eq!(classify_file("lib.rs"), "source");
        assert_eq!(classify_file("README"), "other");
    }

    #[test]
    fn missing_required_key_is_invalid() {
        let e = EventRecord::new(
            "e",
            "r",
            EventKind::ReviewAssigned,
            ts("2024-01-01T00:00:00Z"),
        )
        .with("pr", "p");
        assert!(e.validate().is_err());
        let e = e.with("reviewer", "");
        assert!(e.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_bad_rows() {
        let events = vec![
            pr_created("e1", "pr1", "alice"),
            pr_created("e,2", "pr2", "bob").with("description", "multi\nline, \"quoted\""),
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("event_id,repo,event_kind,timestamp,payload\n"));
        let parsed = parse_events("t", &buf[..]).unwrap();
        assert_eq!(parsed.events, events);
        assert!(parsed.errors.is_empty());

        let dirty = format!(
            "{text}bad,repoA,pr_exploded,2024-01-01T00:00:00Z,\nshort,row\n\
             e9,repoA,review_assigned,notatime,pr=p&reviewer=r\n"
        );
        let parsed = parse_events("t", dirty.as_bytes()).unwrap();
        assert_eq!(parsed.events.len(), 2);
        assert_eq!(parsed.errors.len(), 3);
    }

    #[test]
    fn empty_and_header_only() {
        assert!(parse_events("t", &b""[..]).unwrap().events.is_empty());
        let h = "event_id,repo,event_kind,timestamp,payload\n";
        assert!(parse_events("t", h.as_bytes()).unwrap().events.is_empty());
        assert!(parse_events("t", &b"a,b,c\n"[..]).is_err());
    }

    #[test]
    fn subject_and_actor() {
        let e = EventRecord::new("e", "r", EventKind::WiParented, ts("2024-01-01T00:00:00Z"))
            .with("parent", "w1")
            .with("child", "w2");
        assert_eq!(e.subject(), Some(NodeId::work_item("w2")));
        assert_eq!(e.actor(), None);
        let e = pr_created("e", "p", "alice");
        assert_eq!(e.actor(), Some(NodeId::user("alice")));
    }
}
