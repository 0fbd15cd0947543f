//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so it shows up even when the harness captures test output.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sociograph_core::eval::{
    accuracy_at_k, evaluate, first_relevant_rank, mrr_at_k, planted_expert_hit_rate,
    AblationConfig, Target,
};
use sociograph_core::feed::{get_feed, FeedView, FollowStore};
use sociograph_core::graph::NodeId;
use sociograph_core::index::{Bm25Params, IndexPair, InvertedIndex, ScoredDoc};
use sociograph_core::ingest::replay;
use sociograph_core::recommend::threshold_filter;
use sociograph_core::synth::{generate, CorpusSpec, EvalSet};
use sociograph_testkit::bm25::{naive_scores, random_corpus, to_index_documents};
use sociograph_testkit::convergence::run_schedule;
use sociograph_testkit::fixtures::{feed_events, metric_queries};
use sociograph_testkit::graphs::{random_graph, relaxation_distances};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(budget: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    check(took < budget, || {
        format!("took {took:.2?}, budget {budget:?}")
    })?;
    Ok(took)
}

fn bm25_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for corpus in 0..200 {
        let (docs, query) = random_corpus(&mut rng, 50);
        let params = Bm25Params::default();
        let index =
            InvertedIndex::build(to_index_documents(&docs), params).map_err(|e| e.to_string())?;
        let expected: BTreeMap<String, f64> = naive_scores(&docs, &query, params.k1, params.b)
            .into_iter()
            .collect();
        let got: BTreeMap<String, f64> = index
            .query(&query, usize::MAX)
            .into_iter()
            .map(|s| (s.doc_id, s.relevance))
            .collect();
        check(got.keys().eq(expected.keys()), || {
            format!("corpus {corpus}: scored documents differ")
        })?;
        for (id, score) in &expected {
            worst = worst.max((got[id] - score).abs());
        }
    }
    check(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("200 corpora, max |diff| {worst:.1e}, {took:.2?}"))
}

fn proximity_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pairs = 0usize;
    for round in 0..100 {
        let g = random_graph(&mut rng, 500);
        let ids: Vec<NodeId> = g.node_ids().cloned().collect();
        for _ in 0..3 {
            let source = ids.choose(&mut rng).unwrap();
            let expected = relaxation_distances(&g, source);
            for _ in 0..40 {
                let target = ids.choose(&mut rng).unwrap();
                let depth = rng.gen_range(1..=10);
                let want = expected.get(target).copied().filter(|&d| d <= depth);
                let got = g
                    .proximity(source, target, depth)
                    .map_err(|e| e.to_string())?;
                check(got == want, || {
                    format!(
                        "graph {round}: {source} -> {target} within {depth}: {got:?} vs {want:?}"
                    )
                })?;
                pairs += 1;
            }
        }
    }
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("100 graphs, {pairs} pairs exact, {took:.2?}"))
}

fn ingestion_convergence() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (mut incidents, mut heals) = (0, 0);
    for seed in 0..50u64 {
        let sub = dir.path().join(seed.to_string());
        std::fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        let outcome = run_schedule(seed, &sub);
        check(outcome.converged(), || format!("seed {seed}: {outcome:?}"))?;
        incidents += outcome.incidents;
        heals += outcome.heals;
    }
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!(
        "50 schedules converged ({incidents} injected gaps, {heals} heals), {took:.2?}"
    ))
}

fn threshold() -> Outcome {
    let example: Vec<ScoredDoc> = (1..=8)
        .map(|i| ScoredDoc {
            doc_id: format!("d{i}"),
            relevance: f64::from(i),
        })
        .collect();
    let mut kept: Vec<f64> = threshold_filter(&example)
        .iter()
        .map(|s| s.relevance)
        .collect();
    kept.sort_by(f64::total_cmp);
    check(kept == [6.0, 7.0, 8.0], || {
        format!("scores 1..8 kept {kept:?}")
    })?;
    check(threshold_filter(&[]).is_empty(), || "empty input".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..2000 {
        let n = rng.gen_range(1..60);
        let input: Vec<ScoredDoc> = (0..n)
            .map(|i| ScoredDoc {
                doc_id: format!("d{i}"),
                relevance: if rng.gen_bool(0.3) {
                    f64::from(rng.gen_range(0..5))
                } else {
                    rng.gen_range(0.0..50.0)
                },
            })
            .collect();
        let max = input
            .iter()
            .map(|s| s.relevance)
            .fold(f64::NEG_INFINITY, f64::max);
        let out = threshold_filter(&input);
        check(!out.is_empty(), || format!("case {case}: empty output"))?;
        check(out.iter().any(|s| s.relevance == max), || {
            format!("case {case}: maximum dropped")
        })?;
    }
    Ok("worked example {6,7,8}; 2000 random lists keep their maximum".into())
}

fn ablation_trend() -> Outcome {
    let started = Instant::now();
    let corpus = generate(&CorpusSpec::default()).map_err(|e| e.to_string())?;
    let graph = replay(&corpus.all_events()).map_err(|e| e.to_string())?;
    let set = EvalSet::from(&corpus);
    check(set.queries.len() == 100, || {
        format!("{} queries", set.queries.len())
    })?;
    let ks = [3, 5, 10];
    let table = evaluate(&graph, &set, &AblationConfig::ALL, &ks).map_err(|e| e.to_string())?;
    let acc = |c, k| {
        table
            .row(Target::Artifacts, c)
            .and_then(|r| r.accuracy(k))
            .unwrap_or(f64::NAN)
    };
    let mut cells = Vec::new();
    for k in ks {
        let chain = [
            acc(AblationConfig::MetadataOnly, k),
            acc(AblationConfig::PlusTitle, k),
            acc(AblationConfig::PlusDescription, k),
        ];
        check(chain[0] <= chain[1] && chain[1] <= chain[2], || {
            format!("k={k}: {chain:?}\n{}", table.to_text())
        })?;
        let with_graph = acc(AblationConfig::PlusGraph, k);
        check(with_graph >= chain[2], || {
            format!("k={k}: plus_graph {with_graph} < {}", chain[2])
        })?;
        cells.push(format!(
            "@{k} {:.2}/{:.2}/{:.2}/{:.2}",
            chain[0], chain[1], chain[2], with_graph
        ));
    }
    let hit = planted_expert_hit_rate(&graph, &IndexPair::build(&graph), &set, 3);
    check(hit >= 0.8, || format!("planted-expert hit rate {hit}"))?;
    let took = within(Duration::from_secs(120), started)?;
    Ok(format!(
        "{}; expert hit@3 {hit:.2}; {took:.2?}",
        cells.join(" ")
    ))
}

fn metrics() -> Outcome {
    let ranks: Vec<Option<usize>> = metric_queries()
        .iter()
        .map(|(ranked, relevant)| first_relevant_rank(ranked, relevant))
        .collect();
    let expected_acc = [(1, 0.2), (3, 0.4), (5, 0.6), (10, 0.8)];
    for (k, want) in expected_acc {
        let got = accuracy_at_k(&ranks, k);
        check(got == want, || format!("acc@{k} {got} != {want}"))?;
    }
    let mrr = mrr_at_k(&ranks, 10);
    check((mrr - 1481.0 / 4200.0).abs() < 1e-15, || {
        format!("MRR {mrr}")
    })?;
    let four = [Some(4)];
    check(
        accuracy_at_k(&four, 3) == 0.0
            && accuracy_at_k(&four, 5) == 1.0
            && mrr_at_k(&four, 10) == 0.25,
        || "rank-4 case".into(),
    )?;
    Ok(format!(
        "acc@1/3/5/10 = .2/.4/.6/.8, MRR {mrr:.6}; rank-4 case exact"
    ))
}

fn api_latency() -> Outcome {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let sink = MemorySink::default();
        let handle = serve(state_with(sink.clone(), 4096)).await;
        let client = client();
        let mut samples = Vec::new();
        for body in query_bodies() {
            samples.push(timed_recommend(&client, &handle, &body).await);
        }
        let requests = samples.len();
        handle.shutdown().await.map_err(|e| e.to_string())?;
        let p95 = percentile(&samples, 95);
        check(p95 < Duration::from_millis(500), || format!("p95 {p95:?}"))?;
        let logged = sink.records().len();
        check(logged == requests, || {
            format!("{logged} telemetry records for {requests} requests")
        })?;
        Ok(format!(
            "{requests} requests, p95 {p95:.2?}, {logged} telemetry records"
        ))
    })
}

fn feed_contracts() -> Outcome {
    let events = feed_events();
    let graph = replay(&events).map_err(|e| e.to_string())?;
    let mia = NodeId::user("mia");
    let ids = |follows: &FollowStore, events: &[_], view| -> Result<Vec<String>, String> {
        Ok(get_feed(&graph, events, follows, &mia, view, 100)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|i| i.event_id)
            .collect())
    };
    let mut follows = FollowStore::new();
    let recent = ids(&follows, &events, FeedView::MostRecent)?;
    check(recent.contains(&"f05".to_string()), || {
        "manager misses a two-levels-down report's event".into()
    })?;
    check(recent == ["f09", "f08", "f05", "f06", "f04", "f03"], || {
        format!("most_recent order {recent:?}")
    })?;
    let mut shuffled = events.clone();
    shuffled.reverse();
    check(
        ids(&follows, &shuffled, FeedView::MostRecent)? == recent,
        || "order depends on input order".into(),
    )?;

    let relevance = ids(&follows, &events, FeedView::Relevance)?;
    follows
        .set_follow(&graph, &mia, &NodeId::pull_request("2"), true)
        .map_err(|e| e.to_string())?;
    check(
        ids(&follows, &events, FeedView::MostRecent)? == recent,
        || "follow changed most_recent".into(),
    )?;
    let followed = ids(&follows, &events, FeedView::Relevance)?;
    check(
        followed != relevance && followed[..2] == ["f08", "f04"],
        || format!("relevance after follow {followed:?}"),
    )?;
    Ok("manager sees report events; most_recent total order; follow moves only relevance".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("1 bm25 oracle", bm25_oracle),
        ("2 proximity oracle", proximity_oracle),
        ("3 ingestion convergence", ingestion_convergence),
        ("4 threshold filter", threshold),
        ("5 ablation trend", ablation_trend),
        ("6 metric definitions", metrics),
        ("7 api latency and telemetry", api_latency),
        ("8 feed contracts", feed_contracts),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    for (name, run) in criteria {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &result {
            Ok(detail) => format!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed.push(name);
                format!("FAIL criterion {name}: {why}")
            }
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
