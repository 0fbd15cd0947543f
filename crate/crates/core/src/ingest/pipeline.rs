//! Bootstrap, incremental and self-healing runs over a directory of event files.
//!
//! The live graph is always a deterministic function of the registry and the
//! per-repo watermarks: every bootstrap event of a bootstrapped repo, plus
//! every incremental event newer than that repo's watermark, replayed in
//! chronological order. Heal therefore drops and re-ingests a repo simply by
//! moving its watermark and rebuilding, and no interleaving of runs can leave
//! the graph different from a clean replay of the same events.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime};

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use super::event::{read_events_file, sort_chronologically, EventRecord, ParsedEvents, RowError};
use super::registry::{
    EventFileName, FileStatus, Registry, RegistryEntry, StreamKind, EVENTS_SUFFIX,
};
use super::state::PipelineState;
use crate::graph::{Graph, SharedGraph};
use crate::{Error, Result};

pub const REGISTRY_FILE: &str = "registry.tsv";
pub const STATE_FILE: &str = "pipeline_state.tsv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapFinding {
    pub repo: String,
    pub file: String,
    /// Oldest record in the file that the graph does not already cover.
    pub oldest: Option<DateTime<Utc>>,
    /// Reference point the oldest record is compared against; `None` when
    /// the repo was never bootstrapped.
    pub baseline: Option<DateTime<Utc>>,
    pub difference_days: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub files_processed: usize,
    pub events_applied: usize,
    /// Incremental events already covered by a (re-)bootstrap.
    pub events_superseded: usize,
    pub errors: Vec<RowError>,
    pub failed_files: Vec<String>,
    pub skipped_files: Vec<SkippedFile>,
    /// Incremental files left pending because their repo is locked or halted.
    pub deferred_files: Vec<String>,
    pub gaps: Vec<GapFinding>,
    pub bootstrapped: Vec<String>,
    pub failed_repos: Vec<String>,
    pub healed: Vec<String>,
    pub heal_failed: Vec<String>,
}

impl IngestReport {
    fn absorb(&mut self, other: IngestReport) {
        self.files_processed += other.files_processed;
        self.events_applied += other.events_applied;
        self.events_superseded += other.events_superseded;
        self.errors.extend(other.errors);
        self.failed_files.extend(other.failed_files);
        self.skipped_files.extend(other.skipped_files);
        self.deferred_files.extend(other.deferred_files);
        self.gaps.extend(other.gaps);
        self.bootstrapped.extend(other.bootstrapped);
        self.failed_repos.extend(other.failed_repos);
        self.healed.extend(other.healed);
        self.heal_failed.extend(other.heal_failed);
    }
}

/// Gap rule over already-parsed events of one incremental file.
///
/// Records at or before the repo's watermark are already part of its
/// bootstrap, so only newer ones count as "to be processed". The baseline is
/// the last successful incremental run (or the last bootstrap when no
/// incremental run has happened yet), raised to the watermark when a recent
/// re-bootstrap already covers more than the last run did.
pub fn gap_finding(
    file: &str,
    repo: &str,
    events: &[EventRecord],
    state: &PipelineState,
) -> Option<GapFinding> {
    let watermark = state.watermark(repo);
    let oldest = events
        .iter()
        .map(|e| e.timestamp)
        .filter(|ts| watermark.is_none_or(|wm| *ts > wm))
        .min()?;
    let clock = state
        .last_run(StreamKind::Incremental)
        .or_else(|| state.last_run(StreamKind::Bootstrap));
    let baseline = match (clock, watermark) {
        (Some(c), Some(w)) => c.max(w),
        (c, w) => c.or(w)?,
    };
    let diff = oldest - baseline;
    (diff > Duration::days(i64::from(state.retention_days))).then(|| GapFinding {
        repo: repo.to_string(),
        file: file.to_string(),
        oldest: Some(oldest),
        baseline: Some(baseline),
        difference_days: Some(diff.num_seconds() as f64 / 86_400.0),
    })
}

/// Reads an incremental file and applies [`gap_finding`]. Touches nothing.
pub fn detect_gap(event_dir: &Path, entry: &RegistryEntry, state: &PipelineState) -> Result<bool> {
    if entry.stream_kind != StreamKind::Incremental {
        return Err(Error::InvalidArgument(format!(
            "{} is not an incremental file",
            entry.file_name
        )));
    }
    let parsed = read_events_file(&event_dir.join(&entry.file_name))?;
    Ok(entry
        .repos_covered
        .iter()
        .any(|repo| gap_finding(&entry.file_name, repo, &parsed.events, state).is_some()))
}

pub struct Pipeline {
    event_dir: PathBuf,
    state_dir: Option<PathBuf>,
    registry: Registry,
    state: PipelineState,
    graph: SharedGraph,
    applied: Arc<Vec<EventRecord>>,
    cache: HashMap<String, Arc<ParsedEvents>>,
}

impl Pipeline {
    /// Pipeline whose registry and state live only in memory.
    pub fn in_memory(event_dir: impl Into<PathBuf>, state: PipelineState) -> Self {
        Pipeline {
            event_dir: event_dir.into(),
            state_dir: None,
            registry: Registry::new(),
            state,
            graph: SharedGraph::default(),
            applied: Arc::new(Vec::new()),
            cache: HashMap::new(),
        }
    }

    /// Loads registry and state from `state_dir` and rebuilds the graph from
    /// the completed files they reference.
    pub fn open(event_dir: impl Into<PathBuf>, state_dir: impl Into<PathBuf>) -> Result<Self> {
        let state_dir = state_dir.into();
        let mut p =
            Pipeline::in_memory(event_dir, PipelineState::load(&state_dir.join(STATE_FILE))?);
        p.registry = Registry::load(&state_dir.join(REGISTRY_FILE))?;
        p.state_dir = Some(state_dir);
        p.rebuild()?;
        Ok(p)
    }

    pub fn graph(&self) -> SharedGraph {
        self.graph.clone()
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    pub fn event_dir(&self) -> &Path {
        &self.event_dir
    }

    pub fn set_retention_days(&mut self, days: u32) -> Result<()> {
        if days == 0 {
            return Err(Error::InvalidArgument("retention_days must be >= 1".into()));
        }
        self.state.retention_days = days;
        self.persist()
    }

    /// Events currently reflected in the graph, oldest first.
    pub fn applied_events(&self) -> Arc<Vec<EventRecord>> {
        Arc::clone(&self.applied)
    }

    fn persist(&self) -> Result<()> {
        if let Some(dir) = &self.state_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            self.registry.save(&dir.join(REGISTRY_FILE))?;
            self.state.save(&dir.join(STATE_FILE))?;
        }
        Ok(())
    }

    /// Parses a file once; rows whose repo column disagrees with the file
    /// name are rejected so every event is attributable to exactly one repo.
    fn load(&mut self, file_name: &str) -> Result<Arc<ParsedEvents>> {
        if let Some(p) = self.cache.get(file_name) {
            return Ok(Arc::clone(p));
        }
        let repo = EventFileName::parse(file_name)?.repo;
        let mut parsed = read_events_file(&self.event_dir.join(file_name))?;
        let (events, foreign): (Vec<_>, Vec<_>) =
            parsed.events.into_iter().partition(|e| e.repo == repo);
        parsed.events = events;
        parsed.errors.extend(foreign.into_iter().map(|e| RowError {
            file: file_name.to_string(),
            line: 0,
            message: format!(
                "event {} belongs to repo {:?}, not {repo:?}",
                e.event_id, e.repo
            ),
        }));
        let parsed = Arc::new(parsed);
        self.cache
            .insert(file_name.to_string(), Arc::clone(&parsed));
        Ok(parsed)
    }

    /// Registers every new `*.events.csv` file in the event directory.
    pub fn discover(&mut self) -> Result<(Vec<RegistryEntry>, Vec<SkippedFile>)> {
        let dir = self.event_dir.clone();
        let mut names: Vec<String> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|entry| entry.ok())
            .filter(|entry| entry.file_type().is_ok_and(|t| t.is_file()))
            .filter_map(|entry| entry.file_name().into_string().ok())
            .filter(|name| name.ends_with(EVENTS_SUFFIX))
            .collect();
        names.sort();

        let mut added = Vec::new();
        let mut skipped = Vec::new();
        for name in names {
            if self.registry.contains(&name) {
                continue;
            }
            let parsed_name = match EventFileName::parse(&name) {
                Ok(n) => n,
                Err(e) => {
                    tracing::warn!(file = %name, "skipping event file: {e}");
                    skipped.push(SkippedFile {
                        file: name,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let path = dir.join(&name);
            let meta = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
            let newest = self
                .load(&name)
                .ok()
                .and_then(|p| p.events.iter().map(|e| e.timestamp).max());
            let file_timestamp = newest.unwrap_or_else(|| {
                DateTime::<Utc>::from(meta.modified().unwrap_or(SystemTime::UNIX_EPOCH))
            });
            let entry = RegistryEntry {
                file_name: name,
                size_bytes: meta.len(),
                file_timestamp,
                stream_kind: parsed_name.stream_kind,
                status: FileStatus::Discovered,
                processing_duration_ms: None,
                repos_covered: vec![parsed_name.repo],
            };
            self.registry.register(entry.clone())?;
            added.push(entry);
        }
        self.persist()?;
        Ok((added, skipped))
    }

    /// Moves a discovered file through processing to a terminal status.
    /// Returns the parsed contents on success, `None` if the file failed.
    fn process(
        &mut self,
        file_name: &str,
        report: &mut IngestReport,
    ) -> Result<Option<Arc<ParsedEvents>>> {
        let started = Instant::now();
        self.registry
            .transition(file_name, FileStatus::Processing, None)?;
        let loaded = self.load(file_name);
        let ms = Some(started.elapsed().as_millis() as u64);
        match loaded {
            Ok(parsed) => {
                self.registry
                    .transition(file_name, FileStatus::Completed, ms)?;
                report.files_processed += 1;
                report.errors.extend(parsed.errors.iter().cloned());
                Ok(Some(parsed))
            }
            Err(e) => {
                tracing::error!(file = %file_name, "event file failed: {e}");
                self.registry
                    .transition(file_name, FileStatus::Failed, ms)?;
                report.failed_files.push(file_name.to_string());
                Ok(None)
            }
        }
    }

    /// Repos that have bootstrap files waiting to be processed.
    pub fn pending_bootstrap_repos(&self) -> Vec<String> {
        let repos: BTreeSet<String> = self
            .registry
            .select(StreamKind::Bootstrap, FileStatus::Discovered, None)
            .into_iter()
            .flat_map(|e| e.repos_covered)
            .collect();
        repos.into_iter().collect()
    }

    /// Processes the discovered bootstrap files of `repos` and recomputes
    /// their watermarks. Leaves locks untouched.
    fn bootstrap_repos(
        &mut self,
        repos: &[String],
        report: &mut IngestReport,
    ) -> Result<BTreeSet<String>> {
        let mut ok = BTreeSet::new();
        for repo in repos {
            let mut file_failed = false;
            for entry in
                self.registry
                    .select(StreamKind::Bootstrap, FileStatus::Discovered, Some(repo))
            {
                match self.process(&entry.file_name, report)? {
                    Some(parsed) => report.events_applied += parsed.events.len(),
                    None => file_failed = true,
                }
            }
            let completed =
                self.registry
                    .select(StreamKind::Bootstrap, FileStatus::Completed, Some(repo));
            if file_failed || completed.is_empty() {
                report.failed_repos.push(repo.clone());
                continue;
            }
            let mut watermark = None;
            for entry in &completed {
                let parsed = self.load(&entry.file_name)?;
                watermark = watermark.max(parsed.events.iter().map(|e| e.timestamp).max());
            }
            self.state.watermarks.insert(repo.clone(), watermark);
            ok.insert(repo.clone());
        }
        Ok(ok)
    }

    /// Full historical ingestion of `repos` from their bootstrap files.
    pub fn run_bootstrap(&mut self, repos: &[String], now: DateTime<Utc>) -> Result<IngestReport> {
        let mut report = IngestReport {
            skipped_files: self.discover()?.1,
            ..IngestReport::default()
        };
        let ok = self.bootstrap_repos(repos, &mut report)?;
        for repo in &ok {
            self.state.healing_lock.remove(repo);
        }
        report.bootstrapped = ok.into_iter().collect();
        self.rebuild()?;
        if report.failed_repos.is_empty() {
            self.state.record_run(StreamKind::Bootstrap, now);
        }
        self.persist()?;
        Ok(report)
    }

    /// Applies pending incremental files in file-timestamp order. Repos that
    /// are locked, unknown or gapped are left pending.
    pub fn run_incremental(&mut self, now: DateTime<Utc>) -> Result<IngestReport> {
        let mut report = IngestReport {
            skipped_files: self.discover()?.1,
            ..IngestReport::default()
        };
        let mut halted: BTreeSet<String> = BTreeSet::new();
        let mut changed = false;

        for entry in self
            .registry
            .select(StreamKind::Incremental, FileStatus::Discovered, None)
        {
            let repo = entry.repos_covered[0].clone();
            if self.state.healing_lock.contains(&repo) || halted.contains(&repo) {
                report.deferred_files.push(entry.file_name.clone());
                continue;
            }
            if !self.state.is_bootstrapped(&repo) {
                let oldest = self
                    .load(&entry.file_name)
                    .ok()
                    .and_then(|p| p.events.iter().map(|e| e.timestamp).min());
                report.gaps.push(GapFinding {
                    repo: repo.clone(),
                    file: entry.file_name.clone(),
                    oldest,
                    baseline: None,
                    difference_days: None,
                });
                self.state.healing_lock.insert(repo.clone());
                halted.insert(repo);
                report.deferred_files.push(entry.file_name.clone());
                continue;
            }
            // An unreadable file cannot be checked for gaps; let processing fail it.
            if let Ok(parsed) = self.load(&entry.file_name) {
                if let Some(gap) = gap_finding(&entry.file_name, &repo, &parsed.events, &self.state)
                {
                    tracing::warn!(repo = %repo, file = %entry.file_name, "data gap detected");
                    report.gaps.push(gap);
                    self.state.healing_lock.insert(repo.clone());
                    halted.insert(repo);
                    report.deferred_files.push(entry.file_name.clone());
                    continue;
                }
            }
            if let Some(parsed) = self.process(&entry.file_name, &mut report)? {
                let watermark = self.state.watermark(&repo);
                let fresh = parsed
                    .events
                    .iter()
                    .filter(|e| watermark.is_none_or(|wm| e.timestamp > wm))
                    .count();
                report.events_applied += fresh;
                report.events_superseded += parsed.events.len() - fresh;
                changed |= fresh > 0;
            }
        }

        if changed {
            self.rebuild()?;
        }
        if report.failed_files.is_empty() && report.gaps.is_empty() {
            self.state.record_run(StreamKind::Incremental, now);
        }
        self.persist()?;
        Ok(report)
    }

    /// Re-bootstraps `repos` under the healing lock. A repo is released only
    /// if its bootstrap succeeded and none of its pending incremental files
    /// still shows a gap against the new watermark.
    pub fn heal(&mut self, repos: &[String], now: DateTime<Utc>) -> Result<IngestReport> {
        let mut report = IngestReport {
            skipped_files: self.discover()?.1,
            ..IngestReport::default()
        };
        self.state.healing_lock.extend(repos.iter().cloned());
        self.persist()?;

        let ok = self.bootstrap_repos(repos, &mut report)?;
        self.rebuild()?;
        for repo in repos {
            let mut closed = ok.contains(repo);
            if closed {
                for entry in self.registry.select(
                    StreamKind::Incremental,
                    FileStatus::Discovered,
                    Some(repo),
                ) {
                    let parsed = match self.load(&entry.file_name) {
                        Ok(p) => p,
                        Err(_) => continue,
                    };
                    if let Some(gap) =
                        gap_finding(&entry.file_name, repo, &parsed.events, &self.state)
                    {
                        report.gaps.push(gap);
                        closed = false;
                    }
                }
            }
            if closed {
                self.state.healing_lock.remove(repo);
                report.healed.push(repo.clone());
            } else {
                tracing::error!(repo = %repo, "heal did not close the gap; repo stays locked");
                report.heal_failed.push(repo.clone());
            }
        }
        if !report.healed.is_empty() {
            self.state.record_run(StreamKind::Bootstrap, now);
        }
        self.persist()?;
        Ok(report)
    }

    /// Heals every repo flagged by `report`'s gap findings.
    pub fn heal_gaps(&mut self, report: &IngestReport, now: DateTime<Utc>) -> Result<IngestReport> {
        let repos: BTreeSet<String> = report.gaps.iter().map(|g| g.repo.clone()).collect();
        let mut out = IngestReport::default();
        if !repos.is_empty() {
            out.absorb(self.heal(&repos.into_iter().collect::<Vec<_>>(), now)?);
        }
        Ok(out)
    }

    /// Dry run: gap findings for all pending incremental files.
    pub fn check_gaps(&mut self) -> Result<Vec<GapFinding>> {
        let mut out = Vec::new();
        for entry in self
            .registry
            .select(StreamKind::Incremental, FileStatus::Discovered, None)
        {
            let repo = &entry.repos_covered[0];
            let parsed = self.load(&entry.file_name)?;
            if !self.state.is_bootstrapped(repo) {
                out.push(GapFinding {
                    repo: repo.clone(),
                    file: entry.file_name.clone(),
                    oldest: parsed.events.iter().map(|e| e.timestamp).min(),
                    baseline: None,
                    difference_days: None,
                });
            } else if let Some(gap) =
                gap_finding(&entry.file_name, repo, &parsed.events, &self.state)
            {
                out.push(gap);
            }
        }
        Ok(out)
    }

    /// Replays everything the registry and watermarks say belongs in the
    /// graph and swaps it in.
    pub fn rebuild(&mut self) -> Result<()> {
        let mut by_id: BTreeMap<String, EventRecord> = BTreeMap::new();
        let completed: Vec<RegistryEntry> = self
            .registry
            .entries()
            .filter(|e| e.status == FileStatus::Completed)
            .cloned()
            .collect();
        for entry in completed {
            let repo = &entry.repos_covered[0];
            if !self.state.is_bootstrapped(repo) {
                continue;
            }
            let watermark = self.state.watermark(repo);
            let parsed = self.load(&entry.file_name)?;
            for ev in parsed.events.iter() {
                let keep = match entry.stream_kind {
                    StreamKind::Bootstrap => true,
                    StreamKind::Incremental => watermark.is_none_or(|wm| ev.timestamp > wm),
                };
                if keep {
                    by_id
                        .entry(ev.event_id.clone())
                        .or_insert_with(|| ev.clone());
                }
            }
        }
        let mut events: Vec<EventRecord> = by_id.into_values().collect();
        sort_chronologically(&mut events);

        // Replaying a prefix and then the rest is the same as replaying the
        // whole list, so when only newer events were added they are applied
        // on top of the current graph.
        let old = &self.applied;
        let extends = old.len() <= events.len() && old.iter().zip(&events).all(|(a, b)| a == b);
        if extends && !old.is_empty() {
            let mut graph = self.graph.snapshot();
            for ev in &events[old.len()..] {
                ev.apply_to(&mut graph)?;
            }
            self.graph.replace(graph);
        } else {
            let mut graph = Graph::new();
            for ev in &events {
                ev.apply_to(&mut graph)?;
            }
            self.graph.replace(graph);
        }
        self.applied = Arc::new(events);
        Ok(())
    }
}
