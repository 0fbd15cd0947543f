//! Developer homepage: news feed with follow prioritisation, active items,
//! related people and expertise terms.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode};
use crate::graph::tsv::write_atomic;
use crate::graph::{Direction, EdgeType, Graph, NodeId, NodeKind, DEFAULT_MAX_DEPTH};
use crate::index::{Arity, InvertedIndex};
use crate::ingest::{EventKind, EventRecord};
use crate::{Error, Result};

pub const FOLLOWS_FILE: &str = "follows.tsv";
pub const DEFAULT_FEED_LIMIT: usize = 50;
const EXPERTISE_TERMS: usize = 5;
/// How many levels of reports a manager's feed reaches down.
const REPORT_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItem {
    pub event_id: String,
    pub actor: Option<NodeId>,
    pub subject: NodeId,
    pub event_kind: EventKind,
    pub timestamp: DateTime<Utc>,
    pub repo: String,
    pub followed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedView {
    #[default]
    MostRecent,
    Relevance,
    TeamOnly,
}

impl FeedView {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedView::MostRecent => "most_recent",
            FeedView::Relevance => "relevance",
            FeedView::TeamOnly => "team_only",
        }
    }
}

impl fmt::Display for FeedView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeedView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most_recent" => Ok(FeedView::MostRecent),
            "relevance" => Ok(FeedView::Relevance),
            "team_only" => Ok(FeedView::TeamOnly),
            _ => Err(Error::InvalidArgument(format!(
                "unknown feed view {s:?} (expected most_recent, relevance or team_only)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FollowSet {
    pub user: NodeId,
    pub followed_items: BTreeSet<NodeId>,
}

pub fn is_followable(kind: NodeKind) -> bool {
    matches!(
        kind,
        NodeKind::Repository | NodeKind::PullRequest | NodeKind::WorkItem
    )
}

/// Per-user follow sets, optionally persisted to a TSV file on every change.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowStore {
    sets: BTreeMap<NodeId, BTreeSet<NodeId>>,
    path: Option<PathBuf>,
}

impl FollowStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists and keeps writing changes back to it.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut store = match std::fs::read_to_string(&path) {
            Ok(text) => Self::from_tsv(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Self::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        store.path = Some(path);
        Ok(store)
    }

    pub fn followed(&self, user: &NodeId) -> FollowSet {
        FollowSet {
            user: user.clone(),
            followed_items: self.sets.get(user).cloned().unwrap_or_default(),
        }
    }

    pub fn is_following(&self, user: &NodeId, item: &NodeId) -> bool {
        self.sets.get(user).is_some_and(|s| s.contains(item))
    }

    /// Follows or unfollows `item`. Idempotent.
    pub fn set_follow(
        &mut self,
        graph: &Graph,
        user: &NodeId,
        item: &NodeId,
        followed: bool,
    ) -> Result<FollowSet> {
        if user.kind() != NodeKind::User {
            return Err(Error::InvalidArgument(format!("{user} is not a user")));
        }
        if !is_followable(item.kind()) {
            return Err(Error::InvalidArgument(format!(
                "{} items cannot be followed",
                item.kind()
            )));
        }
        for id in [user, item] {
            if !graph.contains(id) {
                return Err(Error::NotFound(id.clone()));
            }
        }
        let changed = if followed {
            self.sets
                .entry(user.clone())
                .or_default()
                .insert(item.clone())
        } else {
            let set = self.sets.entry(user.clone()).or_default();
            let removed = set.remove(item);
            if set.is_empty() {
                self.sets.remove(user);
            }
            removed
        };
        if changed {
            if let Some(path) = &self.path {
                write_atomic(path, &self.to_tsv())?;
            }
        }
        Ok(self.followed(user))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (user, items) in &self.sets {
            for item in items {
                out.push_str(&format!(
                    "{}\t{}\t{}\n",
                    encode(user.local_id()),
                    item.kind(),
                    encode(item.local_id())
                ));
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut store = FollowStore::new();
        for line in text.lines() {
            let [user, kind, item] = line.split('\t').collect::<Vec<_>>()[..] else {
                return Err(Error::parse(FOLLOWS_FILE, format!("bad line {line:?}")));
            };
            let kind: NodeKind = kind.parse()?;
            if !is_followable(kind) {
                return Err(Error::parse(
                    FOLLOWS_FILE,
                    format!("{kind} is not followable"),
                ));
            }
            store
                .sets
                .entry(NodeId::new(NodeKind::User, decode(user)?)?)
                .or_default()
                .insert(NodeId::new(kind, decode(item)?)?);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_tsv())
    }
}

fn require_user(graph: &Graph, user: &NodeId) -> Result<()> {
    if user.kind() != NodeKind::User || !graph.contains(user) {
        return Err(Error::NotFound(user.clone()));
    }
    Ok(())
}

/// PRs the user created or reviews.
fn touched_prs(graph: &Graph, user: &NodeId) -> BTreeSet<NodeId> {
    graph
        .adjacent(user, EdgeType::Creates, Direction::Out)
        .into_iter()
        .chain(graph.adjacent(user, EdgeType::Reviews, Direction::Out))
        .collect()
}

/// Repositories the user works in: those containing a PR they created or review.
pub fn user_repositories(graph: &Graph, user: &NodeId) -> BTreeSet<NodeId> {
    touched_prs(graph, user)
        .iter()
        .flat_map(|pr| graph.adjacent(pr, EdgeType::Contains, Direction::In))
        .collect()
}

/// Users reporting to `manager` directly or through up to `REPORT_DEPTH` levels.
pub fn transitive_reports(graph: &Graph, manager: &NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::new();
    let mut frontier = vec![manager.clone()];
    for _ in 0..REPORT_DEPTH {
        let mut next = Vec::new();
        for m in &frontier {
            for r in graph.adjacent(m, EdgeType::ReportsTo, Direction::In) {
                if r != *manager && seen.insert(r.clone()) {
                    next.push(r);
                }
            }
        }
        frontier = next;
    }
    seen
}

/// The user plus everyone sharing their manager; for a user without a
/// manager, the user plus their direct reports.
pub fn team_of(graph: &Graph, user: &NodeId) -> BTreeSet<NodeId> {
    let managers = graph.adjacent(user, EdgeType::ReportsTo, Direction::Out);
    let mut team: BTreeSet<NodeId> = if managers.is_empty() {
        graph
            .adjacent(user, EdgeType::ReportsTo, Direction::In)
            .into_iter()
            .collect()
    } else {
        managers
            .iter()
            .flat_map(|m| graph.adjacent(m, EdgeType::ReportsTo, Direction::In))
            .collect()
    };
    team.insert(user.clone());
    team
}

pub fn get_feed(
    graph: &Graph,
    events: &[EventRecord],
    follows: &FollowStore,
    user: &NodeId,
    view: FeedView,
    limit: usize,
) -> Result<Vec<FeedItem>> {
    require_user(graph, user)?;
    let repos: BTreeSet<String> = user_repositories(graph, user)
        .iter()
        .map(|r| r.local_id().to_string())
        .collect();
    let reports = transitive_reports(graph, user);
    let team = (view == FeedView::TeamOnly).then(|| team_of(graph, user));
    let follow_set = follows.followed(user).followed_items;

    let mut items: Vec<FeedItem> = events
        .iter()
        .filter_map(|ev| {
            let subject = ev.subject()?;
            let actor = ev.actor();
            let by_report = actor.as_ref().is_some_and(|a| reports.contains(a));
            if !repos.contains(&ev.repo) && !by_report {
                return None;
            }
            if let Some(team) = &team {
                if !actor.as_ref().is_some_and(|a| team.contains(a)) {
                    return None;
                }
            }
            let followed = follow_set.contains(&subject)
                || follow_set.contains(&NodeId::repository(ev.repo.clone()));
            Some(FeedItem {
                event_id: ev.event_id.clone(),
                actor,
                subject,
                event_kind: ev.event_kind,
                timestamp: ev.timestamp,
                repo: ev.repo.clone(),
                followed,
            })
        })
        .collect();

    let recency = |a: &FeedItem, b: &FeedItem| {
        b.timestamp
            .cmp(&a.timestamp)
            .then_with(|| a.event_id.cmp(&b.event_id))
    };
    match view {
        FeedView::MostRecent | FeedView::TeamOnly => items.sort_by(recency),
        FeedView::Relevance => {
            let dist = graph.distances_from(user, DEFAULT_MAX_DEPTH)?;
            let closeness = |i: &FeedItem| dist.get(&i.subject).copied().unwrap_or(u32::MAX);
            items.sort_by(|a, b| {
                b.followed
                    .cmp(&a.followed)
                    .then_with(|| closeness(a).cmp(&closeness(b)))
                    .then_with(|| recency(a, b))
            });
        }
    }
    items.truncate(limit);
    Ok(items)
}

/// PRs and work items the user is associated with: PRs they created or
/// review, and work items linked to those PRs.
fn artifacts_of(graph: &Graph, user: &NodeId) -> BTreeSet<NodeId> {
    let prs = touched_prs(graph, user);
    let wis: Vec<NodeId> = prs
        .iter()
        .flat_map(|pr| graph.adjacent(pr, EdgeType::LinkedTo, Direction::In))
        .collect();
    prs.into_iter().chain(wis).collect()
}

/// Collaborators ranked by the number of PRs and work items shared with `user`.
pub fn related_people(graph: &Graph, user: &NodeId) -> Result<Vec<(NodeId, usize)>> {
    require_user(graph, user)?;
    let mine = artifacts_of(graph, user);
    let mut candidates = BTreeSet::new();
    for item in &mine {
        let prs = if item.kind() == NodeKind::WorkItem {
            graph.adjacent(item, EdgeType::LinkedTo, Direction::Out)
        } else {
            vec![item.clone()]
        };
        for pr in prs {
            candidates.extend(graph.adjacent(&pr, EdgeType::Creates, Direction::In));
            candidates.extend(graph.adjacent(&pr, EdgeType::Reviews, Direction::In));
        }
    }
    candidates.remove(user);
    let mut out: Vec<(NodeId, usize)> = candidates
        .into_iter()
        .map(|other| {
            let shared = artifacts_of(graph, &other).intersection(&mine).count();
            (other, shared)
        })
        .filter(|(_, c)| *c > 0)
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertiseTerm {
    pub term: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDetails {
    pub user: NodeId,
    pub name: Option<String>,
    pub title: Option<String>,
    pub expertise: Vec<ExpertiseTerm>,
}

/// Name, job title and the top tf·idf unigrams of the user's expert document.
pub fn user_details(
    graph: &Graph,
    expert_idx: &InvertedIndex,
    user: &NodeId,
) -> Result<UserDetails> {
    require_user(graph, user)?;
    let mut expertise: Vec<ExpertiseTerm> = expert_idx
        .doc_terms(&user.to_string())
        .into_iter()
        .filter(|(t, _)| t.arity() == Arity::Unigram)
        .map(|(t, tf)| ExpertiseTerm {
            score: f64::from(tf) * expert_idx.idf(&t),
            term: t.text().to_string(),
        })
        .collect();
    expertise.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.term.cmp(&b.term))
    });
    expertise.truncate(EXPERTISE_TERMS);
    Ok(UserDetails {
        user: user.clone(),
        name: graph.attribute(user, "name").map(str::to_string),
        title: graph.attribute(user, "title").map(str::to_string),
        expertise,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveItem {
    pub id: NodeId,
    pub title: Option<String>,
    pub state: Option<String>,
    pub url: Option<String>,
    pub updated_at: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveItems {
    pub repositories: Vec<ActiveItem>,
    pub pull_requests: Vec<ActiveItem>,
    pub work_items: Vec<ActiveItem>,
    pub code_reviews: Vec<ActiveItem>,
}

fn is_open(graph: &Graph, pr: &NodeId) -> bool {
    !matches!(
        graph.attribute(pr, "state"),
        Some("completed" | "abandoned")
    )
}

fn describe(graph: &Graph, id: &NodeId, updated_at: Option<String>) -> ActiveItem {
    let get = |k: &str| graph.attribute(id, k).map(str::to_string);
    ActiveItem {
        id: id.clone(),
        title: get("title").or_else(|| get("name")),
        state: get("state"),
        url: get("url"),
        updated_at,
    }
}

/// Newest first; items without a timestamp go last, ties by id.
fn by_recency(items: &mut [ActiveItem]) {
    items.sort_by(|a, b| match (&a.updated_at, &b.updated_at) {
        (Some(x), Some(y)) => y.cmp(x).then_with(|| a.id.cmp(&b.id)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.id.cmp(&b.id),
    });
}

pub fn active_items(graph: &Graph, user: &NodeId) -> Result<ActiveItems> {
    require_user(graph, user)?;
    let updated = |id: &NodeId| graph.attribute(id, "updated_at").map(str::to_string);
    let open = |etype| -> Vec<NodeId> {
        graph
            .adjacent(user, etype, Direction::Out)
            .into_iter()
            .filter(|pr| is_open(graph, pr))
            .collect()
    };
    let prs = open(EdgeType::Creates);
    let reviews = open(EdgeType::Reviews);
    let wis: BTreeSet<NodeId> = prs
        .iter()
        .flat_map(|pr| graph.adjacent(pr, EdgeType::LinkedTo, Direction::In))
        .collect();

    let mut repo_recency: HashMap<NodeId, Option<String>> = HashMap::new();
    for item in prs.iter().chain(&reviews).chain(&wis) {
        let repos = match item.kind() {
            NodeKind::PullRequest => graph.adjacent(item, EdgeType::Contains, Direction::In),
            _ => graph
                .attribute(item, "repository")
                .map(NodeId::repository)
                .filter(|r| graph.contains(r))
                .into_iter()
                .collect(),
        };
        for repo in repos {
            let slot = repo_recency.entry(repo).or_insert(None);
            *slot = (*slot).clone().max(updated(item));
        }
    }

    let list = |ids: &mut dyn Iterator<Item = &NodeId>| {
        let mut v: Vec<ActiveItem> = ids.map(|id| describe(graph, id, updated(id))).collect();
        by_recency(&mut v);
        v
    };
    let mut repositories: Vec<ActiveItem> = repo_recency
        .into_iter()
        .map(|(id, ts)| describe(graph, &id, ts))
        .collect();
    by_recency(&mut repositories);
    Ok(ActiveItems {
        repositories,
        pull_requests: list(&mut prs.iter()),
        work_items: list(&mut wis.iter()),
        code_reviews: list(&mut reviews.iter()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedPerson {
    pub user: NodeId,
    pub name: Option<String>,
    pub shared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomePage {
    pub user_details: UserDetails,
    pub active_repositories: Vec<ActiveItem>,
    pub active_pull_requests: Vec<ActiveItem>,
    pub active_work_items: Vec<ActiveItem>,
    pub active_code_reviews: Vec<ActiveItem>,
    pub feed: Vec<FeedItem>,
    pub related_people: Vec<RelatedPerson>,
}

pub fn homepage(
    graph: &Graph,
    events: &[EventRecord],
    follows: &FollowStore,
    expert_idx: &InvertedIndex,
    user: &NodeId,
    view: FeedView,
    limit: usize,
) -> Result<HomePage> {
    let active = active_items(graph, user)?;
    Ok(HomePage {
        user_details: user_details(graph, expert_idx, user)?,
        active_repositories: active.repositories,
        active_pull_requests: active.pull_requests,
        active_work_items: active.work_items,
        active_code_reviews: active.code_reviews,
        feed: get_feed(graph, events, follows, user, view, limit)?,
        related_people: related_people(graph, user)?
            .into_iter()
            .map(|(id, shared)| RelatedPerson {
                name: graph.attribute(&id, "name").map(str::to_string),
                user: id,
                shared,
            })
            .collect(),
    })
}
