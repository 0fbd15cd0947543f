//! Artifact and expert recommendation: dual BM25 retrieval, a percentile
//! cut on each candidate list, then re-ranking by graph proximity to the
//! person searching.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::graph::{Direction, EdgeType, Graph, NodeId, DEFAULT_MAX_DEPTH};
use crate::index::{tokenize, DocKind, DocMetadata, InvertedIndex, ScoredDoc};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationQuery {
    pub title: String,
    pub description: String,
    pub requester: NodeId,
    #[serde(default)]
    pub repo_context: Option<DocMetadata>,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

impl RecommendationQuery {
    pub fn new(
        title: impl Into<String>,
        description: impl Into<String>,
        requester: NodeId,
    ) -> Self {
        RecommendationQuery {
            title: title.into(),
            description: description.into(),
            requester,
            repo_context: None,
            k: DEFAULT_K,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendOptions {
    /// Candidates fetched per index, as a multiple of k.
    pub candidate_multiplier: usize,
    /// Decimal places of relevance that count as a tie.
    pub precision: u32,
    /// When false results keep their BM25 order.
    pub rerank: bool,
    pub max_depth: u32,
    /// Doc ids never returned.
    pub exclude: BTreeSet<String>,
    /// Drop the requester's own PRs and expert entry.
    pub exclude_own: bool,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        RecommendOptions {
            candidate_multiplier: 4,
            precision: 2,
            rerank: true,
            max_depth: DEFAULT_MAX_DEPTH,
            exclude: BTreeSet::new(),
            exclude_own: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: String,
    pub doc_kind: Option<DocKind>,
    pub relevance: f64,
    /// Hops from the requester; `None` when unreachable or not computed.
    pub proximity: Option<u32>,
    pub final_rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTimings {
    pub tokenize_us: u64,
    pub artifact_query_us: u64,
    pub expert_query_us: u64,
    pub filter_us: u64,
    pub rerank_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResponse {
    pub artifacts: Vec<RankedResult>,
    pub experts: Vec<RankedResult>,
    pub empty_query: bool,
    pub cold_requester: bool,
    pub timings: StepTimings,
}

/// Nearest-rank percentile: the `ceil(p * n)`-th smallest value.
fn nearest_rank(sorted_ascending: &[f64], percent: usize) -> f64 {
    let n = sorted_ascending.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted_ascending[rank - 1]
}

/// Keeps the candidates scoring at or above the 75th percentile of the list.
pub fn threshold_filter(scored: &[ScoredDoc]) -> Vec<ScoredDoc> {
    if scored.is_empty() {
        return Vec::new();
    }
    let mut values: Vec<f64> = scored.iter().map(|s| s.relevance).collect();
    values.sort_by(f64::total_cmp);
    let p75 = nearest_rank(&values, 75);
    scored
        .iter()
        .filter(|s| s.relevance >= p75)
        .cloned()
        .collect()
}

fn bucket(relevance: f64, precision: u32) -> i64 {
    (relevance * 10f64.powi(precision as i32)).round() as i64
}

fn by_relevance(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.relevance
        .total_cmp(&a.relevance)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Orders candidates by rounded relevance, then by proximity to the
/// requester (unreachable last), then by doc id. Returns the ranked list and
/// whether the requester was unknown to the graph, in which case the plain
/// relevance order is kept.
pub fn rerank(
    filtered: &[ScoredDoc],
    requester: &NodeId,
    graph: &Graph,
    precision: u32,
    max_depth: u32,
) -> (Vec<RankedResult>, bool) {
    let distances: Option<HashMap<NodeId, u32>> = graph.distances_from(requester, max_depth).ok();
    let cold = distances.is_none();
    let mut rows: Vec<(ScoredDoc, Option<u32>)> = filtered
        .iter()
        .map(|s| {
            let proximity = distances.as_ref().and_then(|d| {
                s.doc_id
                    .parse::<NodeId>()
                    .ok()
                    .and_then(|id| d.get(&id).copied())
            });
            (s.clone(), proximity)
        })
        .collect();
    if cold {
        rows.sort_by(|a, b| by_relevance(&a.0, &b.0));
    } else {
        rows.sort_by(|(a, pa), (b, pb)| {
            bucket(b.relevance, precision)
                .cmp(&bucket(a.relevance, precision))
                .then_with(|| match (pa, pb) {
                    (Some(x), Some(y)) => x.cmp(y),
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => Ordering::Equal,
                })
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
    }
    (ranked(rows), cold)
}

fn ranked(rows: Vec<(ScoredDoc, Option<u32>)>) -> Vec<RankedResult> {
    rows.into_iter()
        .enumerate()
        .map(|(i, (s, proximity))| RankedResult {
            doc_kind: DocKind::of_doc_id(&s.doc_id),
            doc_id: s.doc_id,
            relevance: s.relevance,
            proximity,
            final_rank: i + 1,
        })
        .collect()
}

fn micros(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}

/// Runs the full pipeline for one query.
pub fn recommend(
    q: &RecommendationQuery,
    artifact_idx: &InvertedIndex,
    expert_idx: &InvertedIndex,
    graph: &Graph,
    opts: &RecommendOptions,
) -> RecommendationResponse {
    let mut resp = RecommendationResponse::default();
    let t = Instant::now();
    let tokens = tokenize(&format!("{} {}", q.title, q.description));
    resp.timings.tokenize_us = micros(t);
    if tokens.is_empty() || q.k == 0 {
        resp.empty_query = tokens.is_empty();
        return resp;
    }

    let mut excluded = opts.exclude.clone();
    if opts.exclude_own {
        excluded.insert(q.requester.to_string());
        excluded.extend(
            graph
                .adjacent(&q.requester, EdgeType::Creates, Direction::Out)
                .iter()
                .map(NodeId::to_string),
        );
    }
    let pool = q.k.saturating_mul(opts.candidate_multiplier.max(1));
    let keep = |doc: &str| !excluded.contains(doc);

    let t = Instant::now();
    let artifacts = artifact_idx.query_filtered(&tokens, pool, keep);
    resp.timings.artifact_query_us = micros(t);
    let t = Instant::now();
    let experts = expert_idx.query_filtered(&tokens, pool, keep);
    resp.timings.expert_query_us = micros(t);

    let t = Instant::now();
    let artifacts = threshold_filter(&artifacts);
    let experts = threshold_filter(&experts);
    resp.timings.filter_us = micros(t);

    let t = Instant::now();
    let finish = |list: Vec<ScoredDoc>, cold: &mut bool| -> Vec<RankedResult> {
        let mut out = if opts.rerank {
            let (r, c) = rerank(&list, &q.requester, graph, opts.precision, opts.max_depth);
            *cold |= c;
            r
        } else {
            let mut list = list;
            list.sort_by(by_relevance);
            ranked(list.into_iter().map(|s| (s, None)).collect())
        };
        out.truncate(q.k);
        out
    };
    let mut cold = false;
    resp.artifacts = finish(artifacts, &mut cold);
    resp.experts = finish(experts, &mut cold);
    resp.cold_requester = cold;
    resp.timings.rerank_us = micros(t);
    resp
}
