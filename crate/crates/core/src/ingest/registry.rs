//! Pipeline registry: one bookkeeping row per discovered event file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode, format_ts, parse_ts};
use crate::graph::tsv::write_atomic;
use crate::{Error, Result};

pub const EVENTS_SUFFIX: &str = ".events.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Bootstrap,
    Incremental,
}

impl StreamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamKind::Bootstrap => "bootstrap",
            StreamKind::Incremental => "incremental",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(StreamKind::Bootstrap),
            "incremental" => Ok(StreamKind::Incremental),
            _ => Err(Error::parse("stream kind", format!("unknown stream {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    Discovered,
    Processing,
    Completed,
    Failed,
}

impl FileStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FileStatus::Discovered => "discovered",
            FileStatus::Processing => "processing",
            FileStatus::Completed => "completed",
            FileStatus::Failed => "failed",
        }
    }

    pub fn can_become(self, next: FileStatus) -> bool {
        matches!(
            (self, next),
            (FileStatus::Discovered, FileStatus::Processing)
                | (FileStatus::Processing, FileStatus::Completed)
                | (FileStatus::Processing, FileStatus::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, FileStatus::Completed | FileStatus::Failed)
    }
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            FileStatus::Discovered,
            FileStatus::Processing,
            FileStatus::Completed,
            FileStatus::Failed,
        ]
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| Error::parse("file status", format!("unknown status {s:?}")))
    }
}

/// Parsed form of `<repo>.<stream_kind>.<seq>.events.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventFileName {
    pub repo: String,
    pub stream_kind: StreamKind,
    pub seq: u64,
}

impl EventFileName {
    pub fn parse(name: &str) -> Result<Self> {
        let bad = |why: &str| Error::parse(format!("event file name {name:?}"), why.to_string());
        let stem = name
            .strip_suffix(EVENTS_SUFFIX)
            .ok_or_else(|| bad("missing .events.csv suffix"))?;
        let (rest, seq) = stem
            .rsplit_once('.')
            .ok_or_else(|| bad("missing sequence"))?;
        let (repo, stream) = rest
            .rsplit_once('.')
            .ok_or_else(|| bad("missing stream kind"))?;
        if repo.is_empty() {
            return Err(bad("empty repository name"));
        }
        if seq.is_empty() || !seq.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("sequence must be decimal digits"));
        }
        Ok(EventFileName {
            repo: repo.to_string(),
            stream_kind: stream.parse().map_err(|_| bad("unknown stream kind"))?,
            seq: seq.parse().map_err(|_| bad("sequence out of range"))?,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "{}.{}.{:04}{EVENTS_SUFFIX}",
            self.repo, self.stream_kind, self.seq
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub file_name: String,
    pub size_bytes: u64,
    pub file_timestamp: DateTime<Utc>,
    pub stream_kind: StreamKind,
    pub status: FileStatus,
    pub processing_duration_ms: Option<u64>,
    pub repos_covered: Vec<String>,
}

impl RegistryEntry {
    pub fn covers(&self, repo: &str) -> bool {
        self.repos_covered.iter().any(|r| r == repo)
    }

    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            encode(&self.file_name),
            self.size_bytes,
            format_ts(&self.file_timestamp),
            self.stream_kind,
            self.status,
            self.processing_duration_ms
                .map_or_else(|| "-".to_string(), |d| d.to_string()),
            self.repos_covered
                .iter()
                .map(|r| encode(r))
                .collect::<Vec<_>>()
                .join(",")
        )
    }

    fn from_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [name, size, ts, stream, status, dur, repos] = fields[..] else {
            return Err(Error::parse(
                "registry.tsv",
                format!("expected 7 fields, got {}", fields.len()),
            ));
        };
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::parse("registry.tsv", format!("{s:?}: {e}")))
        };
        Ok(RegistryEntry {
            file_name: decode(name)?,
            size_bytes: num(size)?,
            file_timestamp: parse_ts(ts)?,
            stream_kind: stream.parse()?,
            status: status.parse()?,
            processing_duration_ms: if dur == "-" { None } else { Some(num(dur)?) },
            repos_covered: if repos.is_empty() {
                Vec::new()
            } else {
                repos.split(',').map(decode).collect::<Result<_>>()?
            },
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    entries: BTreeMap<String, RegistryEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, file_name: &str) -> bool {
        self.entries.contains_key(file_name)
    }

    pub fn get(&self, file_name: &str) -> Option<&RegistryEntry> {
        self.entries.get(file_name)
    }

    pub fn entries(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds a row for a newly discovered file. Rows are never replaced.
    pub fn register(&mut self, entry: RegistryEntry) -> Result<()> {
        if self.entries.contains_key(&entry.file_name) {
            return Err(Error::InvalidArgument(format!(
                "{} is already registered",
                entry.file_name
            )));
        }
        self.entries.insert(entry.file_name.clone(), entry);
        Ok(())
    }

    pub fn transition(
        &mut self,
        file_name: &str,
        next: FileStatus,
        duration_ms: Option<u64>,
    ) -> Result<()> {
        let entry = self
            .entries
            .get_mut(file_name)
            .ok_or_else(|| Error::InvalidArgument(format!("{file_name} is not registered")))?;
        if !entry.status.can_become(next) {
            return Err(Error::RegistryTransition {
                file: file_name.to_string(),
                from: entry.status.to_string(),
                to: next.to_string(),
            });
        }
        entry.status = next;
        if duration_ms.is_some() {
            entry.processing_duration_ms = duration_ms;
        }
        Ok(())
    }

    /// Entries of one stream/status for a repo (or all repos), oldest file first.
    pub fn select(
        &self,
        stream: StreamKind,
        status: FileStatus,
        repo: Option<&str>,
    ) -> Vec<RegistryEntry> {
        let mut out: Vec<RegistryEntry> = self
            .entries
            .values()
            .filter(|e| e.stream_kind == stream && e.status == status)
            .filter(|e| repo.is_none_or(|r| e.covers(r)))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            a.file_timestamp
                .cmp(&b.file_timestamp)
                .then_with(|| a.file_name.cmp(&b.file_name))
        });
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut lines: Vec<String> = self.entries.values().map(RegistryEntry::to_line).collect();
        lines.sort();
        lines.into_iter().map(|l| l + "\n").collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut reg = Registry::new();
        for line in text.lines() {
            reg.register(RegistryEntry::from_line(line)?)?;
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_tsv())
    }

    /// Missing file means an empty registry.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_tsv(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Registry::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str) -> RegistryEntry {
        RegistryEntry {
            file_name: name.into(),
            size_bytes: 10,
            file_timestamp: parse_ts("2024-01-01T00:00:00Z").unwrap(),
            stream_kind: StreamKind::Incremental,
            status: FileStatus::Discovered,
            processing_duration_ms: None,
            repos_covered: vec!["repoA".into()],
        }
    }

    #[test]
    fn file_name_convention() {
        let f = EventFileName::parse("repoA.bootstrap.0001.events.csv").unwrap();
        assert_eq!(f.repo, "repoA");
        assert_eq!(f.stream_kind, StreamKind::Bootstrap);
        assert_eq!(f.seq, 1);
        assert_eq!(f.render(), "repoA.bootstrap.0001.events.csv");
        let dotted = EventFileName::parse("org.repo.incremental.7.events.csv").unwrap();
        assert_eq!(dotted.repo, "org.repo");
        for bad in [
            "repoA.events.csv",
            "repoA.weekly.1.events.csv",
            "repoA.bootstrap.x1.events.csv",
            ".bootstrap.1.events.csv",
            "repoA.bootstrap.1.csv",
        ] {
            assert!(EventFileName::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn transitions_follow_lifecycle() {
        let mut r = Registry::new();
        r.register(entry("a")).unwrap();
        assert!(r.register(entry("a")).is_err());
        assert!(r.transition("a", FileStatus::Completed, None).is_err());
        r.transition("a", FileStatus::Processing, None).unwrap();
        r.transition("a", FileStatus::Completed, Some(12)).unwrap();
        assert!(r.transition("a", FileStatus::Processing, None).is_err());
        assert!(r.transition("a", FileStatus::Failed, None).is_err());
        assert_eq!(r.get("a").unwrap().processing_duration_ms, Some(12));
    }

    #[test]
    fn tsv_round_trip() {
        let mut r = Registry::new();
        r.register(entry("b\tweird")).unwrap();
        let mut e = entry("a");
        e.status = FileStatus::Completed;
        e.processing_duration_ms = Some(5);
        e.repos_covered = vec!["x,y".into(), "z".into()];
        r.register(e).unwrap();
        let text = r.to_tsv();
        let back = Registry::from_tsv(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_tsv(), text);
    }

    #[test]
    fn select_orders_by_timestamp_then_name() {
        let mut r = Registry::new();
        let mut late = entry("a");
        late.file_timestamp = parse_ts("2024-01-02T00:00:00Z").unwrap();
        r.register(late).unwrap();
        r.register(entry("b")).unwrap();
        let names: Vec<String> = r
            .select(
                StreamKind::Incremental,
                FileStatus::Discovered,
                Some("repoA"),
            )
            .into_iter()
            .map(|e| e.file_name)
            .collect();
        assert_eq!(names, ["b", "a"]);
        assert!(r
            .select(
                StreamKind::Incremental,
                FileStatus::Discovered,
                Some("other")
            )
            .is_empty());
    }
}
