use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Utc};

use super::registry::StreamKind;
use crate::codec::{decode, encode, format_ts, parse_ts};
use crate::graph::tsv::write_atomic;
use crate::{Error, Result};

/// How long incremental streams hold their data.
pub const DEFAULT_RETENTION_DAYS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineState {
    pub last_successful_run: BTreeMap<StreamKind, DateTime<Utc>>,
    pub retention_days: u32,
    /// Repos being re-bootstrapped; no incremental processing while listed.
    pub healing_lock: BTreeSet<String>,
    /// Bootstrapped repos mapped to the newest event time their bootstrap
    /// data covers (`None` for an empty bootstrap). Incremental events at or
    /// before the watermark are already part of the bootstrap.
    pub watermarks: BTreeMap<String, Option<DateTime<Utc>>>,
}

impl Default for PipelineState {
    fn default() -> Self {
        PipelineState {
            last_successful_run: BTreeMap::new(),
            retention_days: DEFAULT_RETENTION_DAYS,
            healing_lock: BTreeSet::new(),
            watermarks: BTreeMap::new(),
        }
    }
}

impl PipelineState {
    pub fn with_retention(retention_days: u32) -> Result<Self> {
        if retention_days == 0 {
            return Err(Error::InvalidArgument("retention_days must be >= 1".into()));
        }
        Ok(PipelineState {
            retention_days,
            ..Self::default()
        })
    }

    pub fn last_run(&self, stream: StreamKind) -> Option<DateTime<Utc>> {
        self.last_successful_run.get(&stream).copied()
    }

    /// Never moves the clock backwards.
    pub fn record_run(&mut self, stream: StreamKind, now: DateTime<Utc>) {
        let slot = self.last_successful_run.entry(stream).or_insert(now);
        if now > *slot {
            *slot = now;
        }
    }

    pub fn is_bootstrapped(&self, repo: &str) -> bool {
        self.watermarks.contains_key(repo)
    }

    pub fn watermark(&self, repo: &str) -> Option<DateTime<Utc>> {
        self.watermarks.get(repo).copied().flatten()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("retention_days\t{}\n", self.retention_days);
        for (stream, ts) in &self.last_successful_run {
            out.push_str(&format!("last_run\t{stream}\t{}\n", format_ts(ts)));
        }
        for repo in &self.healing_lock {
            out.push_str(&format!("healing\t{}\n", encode(repo)));
        }
        for (repo, wm) in &self.watermarks {
            let wm = wm.as_ref().map_or_else(|| "-".to_string(), format_ts);
            out.push_str(&format!("watermark\t{}\t{wm}\n", encode(repo)));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut state = PipelineState::default();
        for line in text.lines() {
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[..] {
                ["retention_days", n] => {
                    state.retention_days = n.parse().ok().filter(|d| *d >= 1).ok_or_else(|| {
                        Error::parse("pipeline state", format!("bad retention {n:?}"))
                    })?;
                }
                ["last_run", stream, ts] => {
                    state
                        .last_successful_run
                        .insert(stream.parse()?, parse_ts(ts)?);
                }
                ["healing", repo] => {
                    state.healing_lock.insert(decode(repo)?);
                }
                ["watermark", repo, wm] => {
                    let wm = if wm == "-" { None } else { Some(parse_ts(wm)?) };
                    state.watermarks.insert(decode(repo)?, wm);
                }
                _ => return Err(Error::parse("pipeline state", format!("bad line {line:?}"))),
            }
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_tsv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_tsv(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}
