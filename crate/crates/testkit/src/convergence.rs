//! Randomized ingestion schedules for checking that the pipeline always
//! ends up with the graph a clean replay of every event would build.
//!
//! The test plays the upstream aggregator. Every eight-hour tick it writes
//! one incremental file per repo with that window's events. The pipeline
//! runs on the same cadence unless an outage is injected. A data-loss
//! incident drops a repo's files for longer than the retention period while
//! the pipeline is down, which is exactly the case the gap rule is meant to
//! catch. When the pipeline reports a gap, the aggregator produces a fresh
//! bootstrap snapshot and healing runs after a random delay, so files can
//! arrive while the repo is locked.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sociograph_core::graph::Graph;
use sociograph_core::ingest::{
    replay, write_events_file, EventFileName, EventKind, EventRecord, Pipeline, StreamKind,
};

use crate::graphs::graph_difference;

pub const RETENTION_DAYS: u32 = 3;
const TICK_HOURS: i64 = 8;
const TICKS: usize = 42;
const HISTORY_TICKS: usize = 15;
const USERS: usize = 6;

/// Random but valid activity for one repo, at least one event per tick window.
struct RepoHistory {
    repo: String,
    prs: Vec<String>,
    wis: Vec<String>,
    next_id: usize,
    events: Vec<EventRecord>,
}

impl RepoHistory {
    fn id(&mut self) -> String {
        self.next_id += 1;
        format!("{}-{:05}", self.repo, self.next_id)
    }

    fn emit(&mut self, rng: &mut ChaCha8Rng, at: DateTime<Utc>) {
        let user = |rng: &mut ChaCha8Rng| format!("u{}", rng.gen_range(0..USERS));
        let id = self.id();
        let repo = self.repo.clone();
        let ev = |kind| EventRecord::new(id.clone(), repo.clone(), kind, at);
        let roll = if self.prs.is_empty() {
            0
        } else {
            rng.gen_range(0..100)
        };
        let record = match roll {
            0..=29 => {
                let pr = format!("{}{}", self.repo, self.prs.len());
                self.prs.push(pr.clone());
                ev(EventKind::PrCreated)
                    .with("pr", pr.clone())
                    .with("author", user(rng))
                    .with("title", format!("Change {pr} at {}", at.timestamp()))
            }
            30..=44 => ev(EventKind::ReviewAssigned)
                .with("pr", self.prs.choose(rng).unwrap().clone())
                .with("reviewer", user(rng)),
            45..=54 => ev(EventKind::ReviewCommented)
                .with("pr", self.prs.choose(rng).unwrap().clone())
                .with("user", user(rng)),
            55..=62 => ev(EventKind::PrUpdated)
                .with("pr", self.prs.choose(rng).unwrap().clone())
                .with("title", format!("Revised at {}", at.timestamp())),
            63..=69 => ev(EventKind::PrStateChanged)
                .with("pr", self.prs.choose(rng).unwrap().clone())
                .with(
                    "state",
                    *["active", "completed", "abandoned"].choose(rng).unwrap(),
                ),
            70..=77 => ev(EventKind::FileChanged)
                .with("pr", self.prs.choose(rng).unwrap().clone())
                .with("path", format!("src/m{}.rs", rng.gen_range(0..5))),
            78..=85 => {
                let wi = format!("{}{}", self.repo, self.wis.len());
                self.wis.push(wi.clone());
                ev(EventKind::WiCreated)
                    .with("wi", wi)
                    .with("author", user(rng))
                    .with("title", format!("Task at {}", at.timestamp()))
            }
            86..=93 if !self.wis.is_empty() => ev(EventKind::WiLinked)
                .with("wi", self.wis.choose(rng).unwrap().clone())
                .with("pr", self.prs.choose(rng).unwrap().clone()),
            94..=97 if self.wis.len() >= 2 => {
                let parent = self.wis.choose(rng).unwrap().clone();
                let child = self.wis.choose(rng).unwrap().clone();
                if parent == child {
                    ev(EventKind::PrUpdated).with("pr", self.prs[0].clone())
                } else {
                    ev(EventKind::WiParented)
                        .with("parent", parent)
                        .with("child", child)
                }
            }
            _ => {
                let a = rng.gen_range(0..USERS);
                let b = (a + rng.gen_range(1..USERS)) % USERS;
                ev(EventKind::UserReportsTo)
                    .with("user", format!("u{a}"))
                    .with("manager", format!("u{b}"))
            }
        };
        self.events.push(record);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delivery {
    Normal,
    /// Held back one tick and delivered together with the next file.
    Late,
    Dropped,
}

/// What happened during one schedule.
#[derive(Debug, Clone, Default)]
pub struct ScheduleOutcome {
    pub seed: u64,
    pub repos: usize,
    pub events: usize,
    pub incidents: usize,
    pub gaps_detected: usize,
    pub heals: usize,
    pub deferred_files: usize,
    pub reopenings: usize,
    /// First difference from the replay oracle after the final run, if any.
    pub mismatch: Option<String>,
    /// Whether any heal ended with the repo still locked.
    pub heal_failures: Vec<String>,
    /// Repos with data loss the pipeline never reported.
    pub undetected_incidents: Vec<String>,
}

impl ScheduleOutcome {
    pub fn converged(&self) -> bool {
        self.mismatch.is_none()
            && self.heal_failures.is_empty()
            && self.undetected_incidents.is_empty()
    }
}

fn tick_time(t0: DateTime<Utc>, tick: i64) -> DateTime<Utc> {
    t0 + Duration::hours(TICK_HOURS * tick)
}

struct Aggregator<'a> {
    dir: &'a Path,
    histories: Vec<RepoHistory>,
    seq: BTreeMap<String, u64>,
}

impl Aggregator<'_> {
    fn write(&mut self, repo_idx: usize, kind: StreamKind, events: Vec<EventRecord>) {
        let repo = self.histories[repo_idx].repo.clone();
        let seq = self.seq.entry(repo.clone()).or_insert(0);
        *seq += 1;
        let name = EventFileName {
            repo,
            stream_kind: kind,
            seq: *seq,
        }
        .render();
        write_events_file(&self.dir.join(name), &events).expect("writing event file");
    }

    fn window(&self, repo_idx: usize, from: DateTime<Utc>, to: DateTime<Utc>) -> Vec<EventRecord> {
        self.histories[repo_idx]
            .events
            .iter()
            .filter(|e| e.timestamp > from && e.timestamp <= to)
            .cloned()
            .collect()
    }

    fn snapshot(&self, repo_idx: usize, upto: DateTime<Utc>) -> Vec<EventRecord> {
        self.histories[repo_idx]
            .events
            .iter()
            .filter(|e| e.timestamp <= upto)
            .cloned()
            .collect()
    }
}

/// Runs one randomized schedule in `dir` (which must be empty).
pub fn run_schedule(seed: u64, dir: &Path) -> ScheduleOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    let n_repos = rng.gen_range(2..=3);
    let event_dir = dir.join("events");
    let state_dir = dir.join("state");
    std::fs::create_dir_all(&event_dir).expect("creating event dir");

    let mut histories: Vec<RepoHistory> = (0..n_repos)
        .map(|r| RepoHistory {
            repo: format!("repo{r}"),
            prs: Vec::new(),
            wis: Vec::new(),
            next_id: 0,
            events: Vec::new(),
        })
        .collect();
    for h in &mut histories {
        for w in -(HISTORY_TICKS as i64)..(TICKS as i64 + 1) {
            let start = tick_time(t0, w);
            let mut minutes: Vec<i64> = (0..rng.gen_range(1..=3))
                .map(|_| rng.gen_range(1..=TICK_HOURS * 60))
                .collect();
            minutes.sort();
            for m in minutes {
                h.emit(&mut rng, start + Duration::minutes(m));
            }
        }
    }
    let all_events: Vec<EventRecord> = histories.iter().flat_map(|h| h.events.clone()).collect();

    // Plan: per tick, whether the pipeline runs and how each repo's file is delivered.
    let mut pipeline_up = [true; TICKS + 1];
    let mut delivery = vec![vec![Delivery::Normal; n_repos]; TICKS + 1];
    let mut incidents: Vec<(usize, BTreeSet<usize>)> = Vec::new();
    let mut cursor = rng.gen_range(1..=4);
    while cursor + 14 < TICKS {
        match rng.gen_range(0..3) {
            0 => {
                // Data loss: files dropped for longer than retention while down.
                let lost = rng.gen_range(10..=12);
                let mut affected: BTreeSet<usize> = BTreeSet::new();
                affected.insert(rng.gen_range(0..n_repos));
                if rng.gen_bool(0.3) {
                    affected.insert(rng.gen_range(0..n_repos));
                }
                for t in cursor + 1..=cursor + lost {
                    pipeline_up[t] = false;
                    for &r in &affected {
                        delivery[t][r] = Delivery::Dropped;
                    }
                }
                incidents.push((cursor, affected));
                cursor += lost + 4;
            }
            1 => {
                // Plain outage: files pile up, nothing is lost.
                let down = rng.gen_range(1..=12);
                for up in pipeline_up.iter_mut().skip(cursor + 1).take(down) {
                    *up = false;
                }
                cursor += down + 2;
            }
            _ => {
                let r = rng.gen_range(0..n_repos);
                delivery[cursor + 1][r] = Delivery::Late;
                cursor += 3;
            }
        }
    }

    let mut outcome = ScheduleOutcome {
        seed,
        repos: n_repos,
        events: all_events.len(),
        incidents: incidents.len(),
        ..ScheduleOutcome::default()
    };
    let mut agg = Aggregator {
        dir: &event_dir,
        histories: std::mem::take(&mut histories),
        seq: BTreeMap::new(),
    };
    let open = |outcome: &mut ScheduleOutcome| {
        outcome.reopenings += 1;
        let mut p = Pipeline::open(&event_dir, &state_dir).expect("reopening pipeline");
        p.set_retention_days(RETENTION_DAYS).expect("retention");
        p
    };

    // Initial bootstrap of every repo as of t0.
    for r in 0..n_repos {
        let snap = agg.snapshot(r, t0);
        agg.write(r, StreamKind::Bootstrap, snap);
    }
    let mut pipeline = open(&mut outcome);
    outcome.reopenings = 0;
    let repos: Vec<String> = agg.histories.iter().map(|h| h.repo.clone()).collect();
    let boot = pipeline
        .run_bootstrap(&repos, t0)
        .expect("initial bootstrap");
    assert!(
        boot.failed_repos.is_empty(),
        "initial bootstrap failed: {boot:?}"
    );

    let mut delivered_upto: Vec<DateTime<Utc>> = vec![t0; n_repos];
    let mut heal_due: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    let mut detected: BTreeSet<String> = BTreeSet::new();

    let total_ticks = TICKS as i64 + 1;
    for tick in 1..=total_ticks {
        let now = tick_time(t0, tick);
        let idx = tick as usize;
        let final_tick = tick == total_ticks;
        for r in 0..n_repos {
            let mode = if final_tick {
                Delivery::Normal
            } else {
                delivery[idx][r]
            };
            match mode {
                Delivery::Normal => {
                    let prev = tick_time(t0, tick - 1);
                    if delivered_upto[r] < prev {
                        // A held-back window goes out after the current one.
                        let current = agg.window(r, prev, now);
                        agg.write(r, StreamKind::Incremental, current);
                        let late = agg.window(r, delivered_upto[r], prev);
                        agg.write(r, StreamKind::Incremental, late);
                    } else {
                        let current = agg.window(r, delivered_upto[r], now);
                        agg.write(r, StreamKind::Incremental, current);
                    }
                    delivered_upto[r] = now;
                }
                Delivery::Late => {}
                Delivery::Dropped => delivered_upto[r] = now,
            }
        }
        let up = final_tick || pipeline_up[idx];
        if !up {
            continue;
        }
        if rng.gen_bool(0.25) {
            pipeline = open(&mut outcome);
        }
        let report = pipeline.run_incremental(now).expect("incremental run");
        outcome.deferred_files += report.deferred_files.len();
        for gap in &report.gaps {
            outcome.gaps_detected += 1;
            detected.insert(gap.repo.clone());
            let delay = if final_tick { 0 } else { rng.gen_range(0..=2) };
            heal_due
                .entry(idx + delay)
                .or_default()
                .insert(gap.repo.clone());
        }
        let due: BTreeSet<String> = heal_due
            .range(..=idx)
            .flat_map(|(_, repos)| repos.iter().cloned())
            .collect();
        heal_due.retain(|&k, _| k > idx);
        if !due.is_empty() {
            for repo in &due {
                let r = repos.iter().position(|x| x == repo).unwrap();
                let snap = agg.snapshot(r, now);
                agg.write(r, StreamKind::Bootstrap, snap);
            }
            let list: Vec<String> = due.into_iter().collect();
            let healed = pipeline.heal(&list, now).expect("heal");
            outcome.heals += healed.healed.len();
            outcome.heal_failures.extend(healed.heal_failed);
        }
    }

    for (_, affected) in &incidents {
        for &r in affected {
            if !detected.contains(&repos[r]) {
                outcome.undetected_incidents.push(repos[r].clone());
            }
        }
    }

    let expected: Graph = replay(&all_events).expect("oracle replay");
    outcome.mismatch = graph_difference(&pipeline.graph().snapshot(), &expected);
    if outcome.mismatch.is_none() {
        let reopened = Pipeline::open(&event_dir, &state_dir).expect("final reopen");
        outcome.mismatch = graph_difference(&reopened.graph().snapshot(), &expected)
            .map(|d| format!("after reopening: {d}"));
    }
    outcome
}
