//! Seeded synthetic corpus with planted ground truth.
//!
//! Every developer has a primary topic with its own pseudo-word vocabulary.
//! Pull requests draw their text from the author's topic, and a share of
//! them is linked one-to-one to a work item that reuses a few of the same
//! "task words". Those work items become evaluation queries whose correct
//! answers (the linked PR, and the topic's developers) are known up front.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, encode};
use crate::graph::tsv::write_atomic;
use crate::graph::{EdgeType, GraphStats, NodeKind};
use crate::index::is_stopword;
use crate::ingest::{write_events_file, EventFileName, EventKind, EventRecord, StreamKind};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const ARTIFACT_TRUTH_FILE: &str = "ground_truth_artifacts.tsv";
pub const EXPERT_TRUTH_FILE: &str = "ground_truth_experts.tsv";
pub const QUERIES_FILE: &str = "queries.tsv";

const ORGANIZATION: &str = "acme";
const FILLER: [&str; 20] = [
    "update", "change", "improve", "handle", "support", "issue", "logic", "path", "case", "code",
    "flow", "check", "test", "value", "config", "error", "state", "data", "call", "result",
];
const VERBS: [&str; 8] = [
    "Fix", "Add", "Update", "Refactor", "Improve", "Remove", "Handle", "Support",
];
const ONSETS: [&str; 14] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub n_repos: usize,
    pub n_devs: usize,
    pub n_topics: usize,
    pub prs_per_dev: usize,
    /// Fraction of PRs linked to a work item.
    pub link_rate: f64,
    pub vocab_per_topic: usize,
    /// Probability that a description word comes from a foreign topic.
    pub noise_rate: f64,
    /// Reviews, comments, file changes, state changes, reporting lines and
    /// epics. Off yields PR creations and work-item links only.
    pub activity: bool,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            seed: 7,
            n_repos: 4,
            n_devs: 20,
            n_topics: 5,
            prs_per_dev: 10,
            link_rate: 0.5,
            vocab_per_topic: 40,
            noise_rate: 0.15,
            activity: true,
        }
    }
}

impl CorpusSpec {
    /// One repository, three developers with one PR each and nothing else.
    pub fn three_pr_fixture() -> Self {
        CorpusSpec {
            seed: 1,
            n_repos: 1,
            n_devs: 3,
            n_topics: 1,
            prs_per_dev: 1,
            link_rate: 0.0,
            vocab_per_topic: 10,
            noise_rate: 0.0,
            activity: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_repos", self.n_repos),
            ("n_devs", self.n_devs),
            ("n_topics", self.n_topics),
            ("prs_per_dev", self.prs_per_dev),
            ("vocab_per_topic", self.vocab_per_topic),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [
            ("link_rate", self.link_rate),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1]")));
            }
        }
        if self.vocab_per_topic < 3 {
            return Err(Error::InvalidArgument(
                "vocab_per_topic must be >= 3".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub work_item: String,
    pub owner: String,
    pub topic: usize,
    pub repo: String,
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Work item id to the ids of its linked PRs.
    pub artifacts: BTreeMap<String, Vec<String>>,
    /// Topic to the ids of its developers.
    pub experts: BTreeMap<usize, Vec<String>>,
}

/// Expected graph counts, tallied by the generator itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub nodes: BTreeMap<NodeKind, usize>,
    pub edges: BTreeMap<EdgeType, usize>,
    pub events: usize,
}

impl Manifest {
    pub fn matches(&self, stats: &GraphStats) -> bool {
        NodeKind::ALL
            .iter()
            .all(|k| self.nodes.get(k).copied().unwrap_or(0) == stats.nodes(*k))
            && EdgeType::ALL
                .iter()
                .all(|t| self.edges.get(t).copied().unwrap_or(0) == stats.edges(*t))
    }

    fn to_tsv(&self) -> String {
        let mut out = format!("events\t{}\n", self.events);
        for k in NodeKind::ALL {
            out.push_str(&format!(
                "node\t{k}\t{}\n",
                self.nodes.get(&k).copied().unwrap_or(0)
            ));
        }
        for t in EdgeType::ALL {
            out.push_str(&format!(
                "edge\t{t}\t{}\n",
                self.edges.get(&t).copied().unwrap_or(0)
            ));
        }
        out
    }

    fn from_tsv(text: &str) -> Result<Self> {
        let mut m = Manifest::default();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::parse(MANIFEST_FILE, format!("{s:?}: {e}")))
        };
        for line in text.lines() {
            match line.split('\t').collect::<Vec<_>>()[..] {
                ["events", n] => m.events = num(n)?,
                // Zero rows are written for readability; the tally omits them.
                ["node", k, n] => {
                    let (kind, n) = (k.parse()?, num(n)?);
                    if n > 0 {
                        m.nodes.insert(kind, n);
                    }
                }
                ["edge", t, n] => {
                    let (etype, n) = (t.parse()?, num(n)?);
                    if n > 0 {
                        m.edges.insert(etype, n);
                    }
                }
                _ => return Err(Error::parse(MANIFEST_FILE, format!("bad line {line:?}"))),
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    /// Events per repository, chronological.
    pub events: BTreeMap<String, Vec<EventRecord>>,
    pub manifest: Manifest,
    pub truth: GroundTruth,
    pub queries: Vec<EvalQuery>,
}

/// Node and edge bookkeeping mirroring how events land in the graph.
#[derive(Default)]
struct Tally {
    nodes: BTreeSet<(NodeKind, String)>,
    edges: BTreeSet<(EdgeType, String, String)>,
}

impl Tally {
    fn node(&mut self, kind: NodeKind, id: &str) {
        self.nodes.insert((kind, id.to_string()));
    }

    fn edge(&mut self, src: (NodeKind, &str), etype: EdgeType, dst: (NodeKind, &str)) {
        self.node(src.0, src.1);
        self.node(dst.0, dst.1);
        self.edges
            .insert((etype, src.1.to_string(), dst.1.to_string()));
    }

    fn manifest(&self, events: usize) -> Manifest {
        let mut m = Manifest {
            events,
            ..Manifest::default()
        };
        for (k, _) in &self.nodes {
            *m.nodes.entry(*k).or_default() += 1;
        }
        for (t, _, _) in &self.edges {
            *m.edges.entry(*t).or_default() += 1;
        }
        m
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

fn pseudo_words(rng: &mut ChaCha8Rng, n: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.gen_range(2..=3);
        let word: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS.choose(rng).expect("non-empty"),
                    VOWELS.choose(rng).expect("non-empty")
                )
            })
            .collect();
        if !is_stopword(&word) && !FILLER.contains(&word.as_str()) && taken.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

struct Builder {
    rng: ChaCha8Rng,
    next_event: usize,
    events: BTreeMap<String, Vec<EventRecord>>,
    tally: Tally,
}

impl Builder {
    fn emit(&mut self, repo: &str, kind: EventKind, at: DateTime<Utc>, payload: &[(&str, String)]) {
        self.next_event += 1;
        let mut ev = EventRecord::new(format!("ev{:06}", self.next_event), repo, kind, at);
        for (k, v) in payload {
            ev = ev.with(k, v.clone());
        }
        self.events.entry(repo.to_string()).or_default().push(ev);
    }

    /// Picks words from `topic`, occasionally swapping in a foreign topic's word.
    fn noisy_words(
        &mut self,
        vocab: &[Vec<String>],
        topic: usize,
        n: usize,
        noise: f64,
    ) -> Vec<String> {
        (0..n)
            .map(|_| {
                let t = if vocab.len() > 1 && self.rng.gen_bool(noise) {
                    (topic + self.rng.gen_range(1..vocab.len())) % vocab.len()
                } else {
                    topic
                };
                vocab[t].choose(&mut self.rng).expect("non-empty").clone()
            })
            .collect()
    }

    fn filler(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| FILLER.choose(&mut self.rng).expect("non-empty").to_string())
            .collect()
    }
}

pub fn generate(spec: &CorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        next_event: 0,
        events: BTreeMap::new(),
        tally: Tally::default(),
    };
    let mut taken = BTreeSet::new();
    let vocab: Vec<Vec<String>> = (0..spec.n_topics)
        .map(|_| pseudo_words(&mut b.rng, spec.vocab_per_topic, &mut taken))
        .collect();
    // Repository and project names come from topic words, so metadata carries
    // a weak topical signal.
    let repos: Vec<(String, String)> = (0..spec.n_repos)
        .map(|r| {
            let topic = &vocab[r % spec.n_topics];
            let project = topic[0].clone();
            (format!("{}-{}", topic[1], r), project)
        })
        .collect();
    let devs: Vec<String> = (0..spec.n_devs).map(|i| format!("dev{i:02}")).collect();
    let topic_of = |d: usize| d % spec.n_topics;
    let home_of = |d: usize| d % spec.n_repos;
    let display = |d: usize| format!("Developer {d:02}");

    let base = Utc
        .with_ymd_and_hms(2024, 1, 1, 0, 0, 0)
        .single()
        .expect("valid date");
    let total_prs = spec.n_devs * spec.prs_per_dev;
    let n_linked = (spec.link_rate * total_prs as f64).round() as usize;
    let mut order: Vec<usize> = (0..total_prs).collect();
    order.shuffle(&mut b.rng);
    let linked: BTreeSet<usize> = order[..n_linked].iter().copied().collect();

    let mut truth = GroundTruth::default();
    for (d, dev) in devs.iter().enumerate() {
        truth
            .experts
            .entry(topic_of(d))
            .or_default()
            .push(dev.clone());
    }
    let mut queries = Vec::new();
    let mut epic_children: BTreeMap<usize, Vec<String>> = BTreeMap::new();

    if spec.activity {
        // Reporting lines: each repo's first developer manages the others.
        for (r, (repo, _)) in repos.iter().enumerate() {
            let team: Vec<usize> = (0..spec.n_devs).filter(|d| home_of(*d) == r).collect();
            if let Some((&manager, rest)) = team.split_first() {
                for &d in rest {
                    b.emit(
                        repo,
                        EventKind::UserReportsTo,
                        base,
                        &[
                            ("user", devs[d].clone()),
                            ("manager", devs[manager].clone()),
                            ("user_name", display(d)),
                            ("manager_name", display(manager)),
                        ],
                    );
                    b.tally.edge(
                        (NodeKind::User, &devs[d]),
                        EdgeType::ReportsTo,
                        (NodeKind::User, &devs[manager]),
                    );
                }
            }
        }
    }

    for p in 0..total_prs {
        // Round-robin over developers keeps everyone's PRs spread over time.
        let d = p % spec.n_devs;
        let topic = topic_of(d);
        let r = home_of(d);
        let (repo, project) = repos[r].clone();
        let pr_id = format!("{}", 1000 + p);
        let created =
            base + Duration::hours(3 * p as i64 + 1) + Duration::minutes(b.rng.gen_range(0..60));

        let mut task = vocab[topic].clone();
        task.shuffle(&mut b.rng);
        let task: Vec<String> = task.into_iter().take(3).collect();
        let verb = VERBS.choose(&mut b.rng).expect("non-empty").to_string();
        let title = format!(
            "{verb} {}{} handling",
            capitalize(&task[0]),
            capitalize(&task[1])
        );
        let mut desc = task.clone();
        desc.extend(b.noisy_words(&vocab, topic, 4, spec.noise_rate));
        desc.extend(b.filler(3));
        desc.shuffle(&mut b.rng);
        let description = desc.join(" ");

        b.emit(
            &repo,
            EventKind::PrCreated,
            created,
            &[
                ("pr", pr_id.clone()),
                ("author", devs[d].clone()),
                ("author_name", display(d)),
                ("title", title),
                ("description", description),
                ("organization", ORGANIZATION.into()),
                ("project", project.clone()),
                ("url", format!("https://dev.example/{repo}/pr/{pr_id}")),
            ],
        );
        b.tally.edge(
            (NodeKind::User, &devs[d]),
            EdgeType::Creates,
            (NodeKind::PullRequest, &pr_id),
        );
        b.tally.edge(
            (NodeKind::Repository, &repo),
            EdgeType::Contains,
            (NodeKind::PullRequest, &pr_id),
        );

        if spec.activity {
            let peers: Vec<usize> = (0..spec.n_devs)
                .filter(|o| *o != d && topic_of(*o) == topic)
                .collect();
            let others: Vec<usize> = (0..spec.n_devs).filter(|o| *o != d).collect();
            let n_reviewers = b.rng.gen_range(1..=2).min(others.len());
            let mut reviewers = BTreeSet::new();
            while reviewers.len() < n_reviewers {
                let pool = if !peers.is_empty() && b.rng.gen_bool(0.8) {
                    &peers
                } else {
                    &others
                };
                reviewers.insert(*pool.choose(&mut b.rng).expect("non-empty"));
            }
            for (i, rv) in reviewers.iter().enumerate() {
                let at = created + Duration::minutes(10 + i as i64);
                b.emit(
                    &repo,
                    EventKind::ReviewAssigned,
                    at,
                    &[("pr", pr_id.clone()), ("reviewer", devs[*rv].clone())],
                );
                b.tally.edge(
                    (NodeKind::User, &devs[*rv]),
                    EdgeType::Reviews,
                    (NodeKind::PullRequest, &pr_id),
                );
                if b.rng.gen_bool(0.5) {
                    b.emit(
                        &repo,
                        EventKind::ReviewCommented,
                        at + Duration::minutes(30),
                        &[("pr", pr_id.clone()), ("user", devs[*rv].clone())],
                    );
                    b.tally.edge(
                        (NodeKind::User, &devs[*rv]),
                        EdgeType::CommentsOn,
                        (NodeKind::PullRequest, &pr_id),
                    );
                }
            }
            let n_files = b.rng.gen_range(1..=3);
            for f in 0..n_files {
                let word = vocab[topic].choose(&mut b.rng).expect("non-empty").clone();
                let path = match b.rng.gen_range(0..10) {
                    0 => format!("{word}/config.yaml"),
                    1 => "Cargo.toml".to_string(),
                    _ => format!("src/{word}/{}.rs", task[f % 3]),
                };
                let file_id = format!("{repo}/{path}");
                b.emit(
                    &repo,
                    EventKind::FileChanged,
                    created + Duration::minutes(5),
                    &[("pr", pr_id.clone()), ("path", path)],
                );
                b.tally.edge(
                    (NodeKind::PullRequest, &pr_id),
                    EdgeType::Changes,
                    (NodeKind::File, &file_id),
                );
            }
            if b.rng.gen_bool(0.7) {
                b.emit(
                    &repo,
                    EventKind::PrStateChanged,
                    created + Duration::hours(2),
                    &[("pr", pr_id.clone()), ("state", "completed".into())],
                );
            }
        }

        if linked.contains(&p) {
            let wi_id = format!("{}", 5000 + p);
            let wi_title = format!("{} {} not working", capitalize(&task[0]), task[2]);
            let mut wdesc = vec![task[1].clone(), task[2].clone()];
            wdesc.extend(b.noisy_words(&vocab, topic, 3, spec.noise_rate));
            wdesc.extend(b.filler(2));
            wdesc.shuffle(&mut b.rng);
            if b.rng.gen_bool(0.3) {
                wdesc.push(format!("in {repo}"));
            }
            let wi_desc = wdesc.join(" ");
            b.emit(
                &repo,
                EventKind::WiCreated,
                created - Duration::minutes(30),
                &[
                    ("wi", wi_id.clone()),
                    ("author", devs[d].clone()),
                    ("title", wi_title.clone()),
                    ("description", wi_desc.clone()),
                    ("organization", ORGANIZATION.into()),
                    ("project", project.clone()),
                    ("url", format!("https://dev.example/{repo}/wi/{wi_id}")),
                ],
            );
            b.tally.node(NodeKind::WorkItem, &wi_id);
            b.emit(
                &repo,
                EventKind::WiLinked,
                created + Duration::minutes(1),
                &[("wi", wi_id.clone()), ("pr", pr_id.clone())],
            );
            b.tally.edge(
                (NodeKind::WorkItem, &wi_id),
                EdgeType::LinkedTo,
                (NodeKind::PullRequest, &pr_id),
            );
            truth.artifacts.insert(wi_id.clone(), vec![pr_id.clone()]);
            queries.push(EvalQuery {
                work_item: wi_id.clone(),
                owner: devs[d].clone(),
                topic,
                repo: repo.clone(),
                title: wi_title,
                description: wi_desc,
            });
            epic_children.entry(r).or_default().push(wi_id);
        }
    }

    if spec.activity {
        for (r, children) in &epic_children {
            let (repo, project) = &repos[*r];
            let epic = format!("epic-{repo}");
            let owner = (0..spec.n_devs).find(|d| home_of(*d) == *r).unwrap_or(0);
            b.emit(
                repo,
                EventKind::WiCreated,
                base,
                &[
                    ("wi", epic.clone()),
                    ("author", devs[owner].clone()),
                    ("title", format!("Epic {}", capitalize(project))),
                    ("organization", ORGANIZATION.into()),
                    ("project", project.clone()),
                ],
            );
            b.tally.node(NodeKind::WorkItem, &epic);
            for child in children {
                b.emit(
                    repo,
                    EventKind::WiParented,
                    base + Duration::minutes(1),
                    &[("parent", epic.clone()), ("child", child.clone())],
                );
                b.tally.edge(
                    (NodeKind::WorkItem, &epic),
                    EdgeType::ParentOf,
                    (NodeKind::WorkItem, child),
                );
            }
        }
    }

    let mut events = b.events;
    for list in events.values_mut() {
        crate::ingest::sort_chronologically(list);
    }
    let n_events = events.values().map(Vec::len).sum();
    let manifest = b.tally.manifest(n_events);
    Ok(Corpus {
        spec: spec.clone(),
        events,
        manifest,
        truth,
        queries,
    })
}

impl Corpus {
    pub fn all_events(&self) -> Vec<EventRecord> {
        self.events.values().flatten().cloned().collect()
    }

    pub fn repos(&self) -> Vec<String> {
        self.events.keys().cloned().collect()
    }

    /// Writes one bootstrap file per repo into `event_dir` and the manifest,
    /// ground truth and queries into `meta_dir`.
    pub fn write(&self, event_dir: &Path, meta_dir: &Path) -> Result<()> {
        for (repo, events) in &self.events {
            let name = EventFileName {
                repo: repo.clone(),
                stream_kind: StreamKind::Bootstrap,
                seq: 1,
            }
            .render();
            write_events_file(&event_dir.join(name), events)?;
        }
        std::fs::create_dir_all(meta_dir).map_err(|e| Error::io(meta_dir, e))?;
        write_atomic(&meta_dir.join(MANIFEST_FILE), &self.manifest.to_tsv())?;
        let mut arts = String::new();
        for (wi, prs) in &self.truth.artifacts {
            arts.push_str(&format!("{wi}\t{}\n", prs.join(",")));
        }
        write_atomic(&meta_dir.join(ARTIFACT_TRUTH_FILE), &arts)?;
        let mut experts = String::new();
        for (topic, devs) in &self.truth.experts {
            experts.push_str(&format!("{topic}\t{}\n", devs.join(",")));
        }
        write_atomic(&meta_dir.join(EXPERT_TRUTH_FILE), &experts)?;
        let mut q = String::new();
        for query in &self.queries {
            q.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                encode(&query.work_item),
                encode(&query.owner),
                query.topic,
                encode(&query.repo),
                encode(&query.title),
                encode(&query.description)
            ));
        }
        write_atomic(&meta_dir.join(QUERIES_FILE), &q)
    }
}

/// Evaluation inputs read back from a corpus directory.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub manifest: Manifest,
    pub truth: GroundTruth,
    pub queries: Vec<EvalQuery>,
}

impl From<&Corpus> for EvalSet {
    fn from(c: &Corpus) -> Self {
        EvalSet {
            manifest: c.manifest.clone(),
            truth: c.truth.clone(),
            queries: c.queries.clone(),
        }
    }
}

impl EvalSet {
    pub fn load(meta_dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = meta_dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let bad =
            |file: &str, line: &str| Error::parse(file.to_string(), format!("bad line {line:?}"));
        let manifest = Manifest::from_tsv(&read(MANIFEST_FILE)?)?;
        let mut truth = GroundTruth::default();
        for line in read(ARTIFACT_TRUTH_FILE)?.lines() {
            let (wi, prs) = line
                .split_once('\t')
                .ok_or_else(|| bad(ARTIFACT_TRUTH_FILE, line))?;
            truth
                .artifacts
                .insert(wi.to_string(), prs.split(',').map(str::to_string).collect());
        }
        for line in read(EXPERT_TRUTH_FILE)?.lines() {
            let (topic, devs) = line
                .split_once('\t')
                .ok_or_else(|| bad(EXPERT_TRUTH_FILE, line))?;
            let topic = topic.parse().map_err(|_| bad(EXPERT_TRUTH_FILE, line))?;
            truth
                .experts
                .insert(topic, devs.split(',').map(str::to_string).collect());
        }
        let mut queries = Vec::new();
        for line in read(QUERIES_FILE)?.lines() {
            let [wi, owner, topic, repo, title, desc] = line.split('\t').collect::<Vec<_>>()[..]
            else {
                return Err(bad(QUERIES_FILE, line));
            };
            queries.push(EvalQuery {
                work_item: decode(wi)?,
                owner: decode(owner)?,
                topic: topic.parse().map_err(|_| bad(QUERIES_FILE, line))?,
                repo: decode(repo)?,
                title: decode(title)?,
                description: decode(desc)?,
            });
        }
        Ok(EvalSet {
            manifest,
            truth,
            queries,
        })
    }
}
