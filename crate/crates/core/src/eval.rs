//! Top-K accuracy / MRR ablation harness.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::index::{BuildOptions, FieldSelection, IndexPair};
use crate::recommend::{recommend, RecommendOptions, RecommendationQuery};
use crate::synth::{EvalQuery, EvalSet};
use crate::{Error, Result};

pub const DEFAULT_K_VALUES: [usize; 3] = [3, 5, 10];

/// Cumulative configurations, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationConfig {
    MetadataOnly,
    PlusTitle,
    PlusDescription,
    PlusGraph,
}

impl AblationConfig {
    pub const ALL: [AblationConfig; 4] = [
        AblationConfig::MetadataOnly,
        AblationConfig::PlusTitle,
        AblationConfig::PlusDescription,
        AblationConfig::PlusGraph,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationConfig::MetadataOnly => "metadata_only",
            AblationConfig::PlusTitle => "plus_title",
            AblationConfig::PlusDescription => "plus_description",
            AblationConfig::PlusGraph => "plus_graph",
        }
    }

    pub fn fields(self) -> FieldSelection {
        FieldSelection {
            metadata: true,
            title: self >= AblationConfig::PlusTitle,
            description: self >= AblationConfig::PlusDescription,
        }
    }

    pub fn rerank(self) -> bool {
        self == AblationConfig::PlusGraph
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationConfig::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation config {s:?}")))
    }
}

/// 1-based rank of the first relevant id in `ranked`, if any.
pub fn first_relevant_rank(ranked: &[String], relevant: &BTreeSet<String>) -> Option<usize> {
    ranked
        .iter()
        .position(|d| relevant.contains(d))
        .map(|i| i + 1)
}

/// Fraction of queries with a relevant item within the top `k`.
pub fn accuracy_at_k(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|r| r.is_some_and(|r| r <= k)).count() as f64 / ranks.len() as f64
}

/// Mean reciprocal rank of the first relevant item, counting ranks beyond
/// `k` (or misses) as zero.
pub fn mrr_at_k(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks
        .iter()
        .map(|r| match r {
            Some(r) if *r <= k => 1.0 / *r as f64,
            _ => 0.0,
        })
        .sum::<f64>()
        / ranks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub k: usize,
    pub accuracy: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: AblationConfig,
    pub cells: Vec<MetricCell>,
    /// MRR over the full returned list.
    pub mrr: f64,
}

impl AblationRow {
    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.cells.iter().find(|c| c.k == k).map(|c| c.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub k_values: Vec<usize>,
    pub queries: usize,
    pub artifacts: Vec<AblationRow>,
    pub experts: Vec<AblationRow>,
}

fn row(config: AblationConfig, ranks: &[Option<usize>], k_values: &[usize]) -> AblationRow {
    let max_k = k_values.iter().copied().max().unwrap_or(0);
    AblationRow {
        config,
        cells: k_values
            .iter()
            .map(|&k| MetricCell {
                k,
                accuracy: accuracy_at_k(ranks, k),
                mrr: mrr_at_k(ranks, k),
            })
            .collect(),
        mrr: mrr_at_k(ranks, max_k),
    }
}

impl AblationTable {
    pub fn row(&self, target: Target, config: AblationConfig) -> Option<&AblationRow> {
        let rows = match target {
            Target::Artifacts => &self.artifacts,
            Target::Experts => &self.experts,
        };
        rows.iter().find(|r| r.config == config)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("target\tconfig");
        for k in &self.k_values {
            out.push_str(&format!("\taccuracy@{k}\tmrr@{k}"));
        }
        out.push_str("\tmrr\n");
        for (target, rows) in [("artifacts", &self.artifacts), ("experts", &self.experts)] {
            for r in rows {
                out.push_str(&format!("{target}\t{}", r.config));
                for c in &r.cells {
                    out.push_str(&format!("\t{:.4}\t{:.4}", c.accuracy, c.mrr));
                }
                out.push_str(&format!("\t{:.4}\n", r.mrr));
            }
        }
        out
    }

    /// Aligned plain-text rendering, one block per target.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (title, rows) in [
            ("Artifact recommendation", &self.artifacts),
            ("Expert recommendation", &self.experts),
        ] {
            out.push_str(&format!("{title} ({} queries)\n", self.queries));
            let mut header = format!("{:<18}", "Configuration");
            for k in &self.k_values {
                header.push_str(&format!(" {:>8}", format!("Top-{k}")));
            }
            header.push_str(&format!(" {:>8}\n", "MRR"));
            out.push_str(&header);
            out.push_str(&"-".repeat(header.trim_end().len()));
            out.push('\n');
            for r in rows {
                out.push_str(&format!("{:<18}", r.config.as_str()));
                for c in &r.cells {
                    out.push_str(&format!(" {:>8.4}", c.accuracy));
                }
                out.push_str(&format!(" {:>8.4}\n", r.mrr));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Artifacts,
    Experts,
}

fn relevant_prs(set: &EvalSet, q: &EvalQuery) -> BTreeSet<String> {
    set.truth
        .artifacts
        .get(&q.work_item)
        .into_iter()
        .flatten()
        .map(|pr| NodeId::pull_request(pr.as_str()).to_string())
        .collect()
}

fn relevant_experts(set: &EvalSet, q: &EvalQuery) -> BTreeSet<String> {
    set.truth
        .experts
        .get(&q.topic)
        .into_iter()
        .flatten()
        .map(|dev| NodeId::user(dev.as_str()).to_string())
        .collect()
}

fn to_query(q: &EvalQuery, k: usize) -> RecommendationQuery {
    RecommendationQuery::new(
        q.title.clone(),
        q.description.clone(),
        NodeId::user(q.owner.as_str()),
    )
    .with_k(k)
}

/// Runs every query under every configuration.
///
/// The query's own work item is removed from the artifact index for that
/// query, and the requester's own expert entry is never returned. The
/// requester's PRs stay eligible, since the linked PR being sought is
/// authored by the work item's owner.
pub fn evaluate(
    graph: &Graph,
    set: &EvalSet,
    configs: &[AblationConfig],
    k_values: &[usize],
) -> Result<AblationTable> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::InvalidArgument("k values must be positive".into()));
    }
    let max_k = k_values.iter().copied().max().unwrap_or(1);
    let mut table = AblationTable {
        k_values: k_values.to_vec(),
        queries: set.queries.len(),
        artifacts: Vec::new(),
        experts: Vec::new(),
    };
    for &config in configs {
        let indices = IndexPair::build_with(
            graph,
            BuildOptions {
                fields: config.fields(),
                ..BuildOptions::default()
            },
        )?;
        if indices.artifact.doc_count() == 0 || indices.expert.doc_count() == 0 {
            tracing::warn!(config = %config, "index is empty; metrics will be zero");
        }
        let ranks: Vec<(Option<usize>, Option<usize>)> = set
            .queries
            .par_iter()
            .map(|q| {
                let wi = NodeId::work_item(q.work_item.as_str()).to_string();
                let artifact_idx = indices.artifact.without(&BTreeSet::from([wi]));
                let opts = RecommendOptions {
                    rerank: config.rerank(),
                    exclude_own: false,
                    exclude: BTreeSet::from([NodeId::user(q.owner.as_str()).to_string()]),
                    ..RecommendOptions::default()
                };
                let resp = recommend(
                    &to_query(q, max_k),
                    &artifact_idx,
                    &indices.expert,
                    graph,
                    &opts,
                );
                let ids = |v: &[crate::recommend::RankedResult]| -> Vec<String> {
                    v.iter().map(|r| r.doc_id.clone()).collect()
                };
                (
                    first_relevant_rank(&ids(&resp.artifacts), &relevant_prs(set, q)),
                    first_relevant_rank(&ids(&resp.experts), &relevant_experts(set, q)),
                )
            })
            .collect();
        let (art, exp): (Vec<_>, Vec<_>) = ranks.into_iter().unzip();
        table.artifacts.push(row(config, &art, k_values));
        table.experts.push(row(config, &exp, k_values));
    }
    Ok(table)
}

/// Share of queries whose top-`k` experts, as served to the work item's
/// owner with default options, include a developer of the query's topic.
pub fn planted_expert_hit_rate(graph: &Graph, indices: &IndexPair, set: &EvalSet, k: usize) -> f64 {
    if set.queries.is_empty() {
        return 0.0;
    }
    let hits = set
        .queries
        .par_iter()
        .filter(|q| {
            let resp = recommend(
                &to_query(q, k),
                &indices.artifact,
                &indices.expert,
                graph,
                &RecommendOptions::default(),
            );
            let relevant = relevant_experts(set, q);
            resp.experts.iter().any(|r| relevant.contains(&r.doc_id))
        })
        .count();
    hits as f64 / set.queries.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_four_example() {
        let ranks = [Some(4)];
        assert_eq!(accuracy_at_k(&ranks, 3), 0.0);
        assert_eq!(accuracy_at_k(&ranks, 5), 1.0);
        assert_eq!(mrr_at_k(&ranks, 10), 0.25);
        assert_eq!(mrr_at_k(&[Some(1)], 10), 1.0);
        assert_eq!(accuracy_at_k(&[Some(1)], 3), 1.0);
    }

    #[test]
    fn first_relevant_rank_finds_earliest_hit() {
        let ranked: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let rel: BTreeSet<String> = ["c".to_string(), "b".to_string()].into();
        assert_eq!(first_relevant_rank(&ranked, &rel), Some(2));
        assert_eq!(first_relevant_rank(&ranked, &BTreeSet::new()), None);
    }

    #[test]
    fn configs_are_cumulative() {
        let f: Vec<FieldSelection> = AblationConfig::ALL.iter().map(|c| c.fields()).collect();
        assert!(!f[0].title && !f[0].description);
        assert!(f[1].title && !f[1].description);
        assert!(f[2].title && f[2].description && f[3] == f[2]);
        assert!(AblationConfig::PlusGraph.rerank() && !AblationConfig::PlusDescription.rerank());
        assert_eq!(
            "plus_graph".parse::<AblationConfig>().unwrap(),
            AblationConfig::PlusGraph
        );
    }
}
