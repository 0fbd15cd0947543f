use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use serde_json::json;
use sociograph_core::codec::{format_ts, parse_ts};
use sociograph_core::config::{Config, DataLayout};
use sociograph_core::eval::{evaluate, planted_expert_hit_rate, AblationConfig};
use sociograph_core::feed::{get_feed, FeedView, FollowStore, DEFAULT_FEED_LIMIT};
use sociograph_core::graph::{tsv, NodeId, NodeKind};
use sociograph_core::index::{IndexPair, InvertedIndex};
use sociograph_core::ingest::{GapFinding, IngestReport, Pipeline};
use sociograph_core::recommend::{recommend, RankedResult, RecommendOptions, RecommendationQuery};
use sociograph_core::synth::{generate, CorpusSpec, EvalSet};
use sociograph_service::AppState;

use crate::{Cli, Clock, Command, IndexCommand, IngestCommand, OutputFormat};

pub fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => {
            Config::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        None => Config::default(),
    };
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let layout = config.layout();
    match cli.command {
        Command::Synth(a) => synth(&layout, a),
        Command::Ingest(cmd) => ingest(&config, cmd),
        Command::Heal(a) => heal(&config, a),
        Command::Index(cmd) => index(&layout, cmd),
        Command::Recommend(a) => recommend_cmd(&config, a),
        Command::Feed(a) => feed(&layout, a),
        Command::Serve(a) => serve(config, a),
        Command::Eval(a) => eval(&layout, a),
    }
}

fn now(clock: &Clock) -> Result<DateTime<Utc>> {
    match &clock.now {
        Some(s) => parse_ts(s).with_context(|| format!("--now {s:?} is not an RFC 3339 timestamp")),
        None => Ok(Utc::now()),
    }
}

fn parse_user(raw: &str) -> Result<NodeId> {
    if raw.contains(':') {
        let id: NodeId = raw.parse().with_context(|| format!("--user {raw:?}"))?;
        if id.kind() != NodeKind::User {
            bail!("--user {raw:?} is not a user id");
        }
        Ok(id)
    } else if raw.is_empty() {
        bail!("--user must not be empty")
    } else {
        Ok(NodeId::user(raw))
    }
}

fn open_pipeline(config: &Config) -> Result<Pipeline> {
    let layout = config.layout();
    let mut p = Pipeline::open(layout.events_dir(), layout.state_dir())
        .with_context(|| format!("opening pipeline state under {}", layout.root.display()))?;
    if p.state().retention_days != config.retention_days {
        p.set_retention_days(config.retention_days)?;
    }
    Ok(p)
}

fn load_indices(layout: &DataLayout) -> Result<IndexPair> {
    let load = |path: std::path::PathBuf| {
        InvertedIndex::load(&path).with_context(|| {
            format!(
                "reading {}; run `sociograph index build` first",
                path.display()
            )
        })
    };
    Ok(IndexPair {
        artifact: load(layout.artifact_index())?,
        expert: load(layout.expert_index())?,
    })
}

fn synth(layout: &DataLayout, a: crate::SynthArgs) -> Result<()> {
    let d = CorpusSpec::default();
    let spec = CorpusSpec {
        seed: a.seed,
        n_repos: a.repos.unwrap_or(d.n_repos),
        n_devs: a.devs.unwrap_or(d.n_devs),
        n_topics: a.topics.unwrap_or(d.n_topics),
        prs_per_dev: a.prs_per_dev.unwrap_or(d.prs_per_dev),
        link_rate: a.link_rate.unwrap_or(d.link_rate),
        noise_rate: a.noise_rate.unwrap_or(d.noise_rate),
        ..d
    };
    let corpus = generate(&spec)?;
    corpus.write(&layout.events_dir(), &layout.synth_dir())?;
    println!(
        "wrote {} events for {} repos to {}",
        corpus.manifest.events,
        corpus.repos().len(),
        layout.events_dir().display()
    );
    println!(
        "expected graph: {} nodes, {} edges; {} evaluation queries in {}",
        corpus.manifest.nodes.values().sum::<usize>(),
        corpus.manifest.edges.values().sum::<usize>(),
        corpus.queries.len(),
        layout.synth_dir().display()
    );
    Ok(())
}

fn describe_gap(g: &GapFinding) -> String {
    let ts = |t: &Option<DateTime<Utc>>| t.as_ref().map(format_ts).unwrap_or_else(|| "-".into());
    match g.difference_days {
        Some(days) => format!(
            "gap in {}: {} starts {} but the last run was {} ({days:.2} days)",
            g.repo,
            g.file,
            ts(&g.oldest),
            ts(&g.baseline)
        ),
        None => format!(
            "gap in {}: {} arrived before the repo was bootstrapped",
            g.repo, g.file
        ),
    }
}

fn print_report(r: &IngestReport) {
    println!("files processed: {}", r.files_processed);
    println!("events applied: {}", r.events_applied);
    if r.events_superseded > 0 {
        println!(
            "events already covered by bootstrap: {}",
            r.events_superseded
        );
    }
    for s in &r.skipped_files {
        println!("skipped {}: {}", s.file, s.reason);
    }
    for e in &r.errors {
        println!("row error: {e:?}");
    }
    for f in &r.failed_files {
        println!("failed file: {f}");
    }
    for g in &r.gaps {
        println!("{}", describe_gap(g));
    }
    let list = |label: &str, v: &[String]| {
        if !v.is_empty() {
            println!("{label}: {}", v.join(", "));
        }
    };
    list("deferred", &r.deferred_files);
    list("bootstrapped", &r.bootstrapped);
    list("failed repos", &r.failed_repos);
    list("healed", &r.healed);
    list("heal failed", &r.heal_failed);
}

fn save_graph(p: &Pipeline, layout: &DataLayout) -> Result<()> {
    let graph = p.graph().snapshot();
    tsv::save(&graph, &layout.graph_dir())?;
    println!(
        "graph: {} nodes, {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    Ok(())
}

fn ingest(config: &Config, cmd: IngestCommand) -> Result<()> {
    let layout = config.layout();
    let mut p = open_pipeline(config)?;
    match cmd {
        IngestCommand::Bootstrap { repos, clock } => {
            let now = now(&clock)?;
            let repos = if repos.is_empty() {
                p.discover()?;
                p.pending_bootstrap_repos()
            } else {
                repos
            };
            if repos.is_empty() {
                println!("no bootstrap files pending");
            }
            print_report(&p.run_bootstrap(&repos, now)?);
        }
        IngestCommand::Incremental { no_heal, clock } => {
            let now = now(&clock)?;
            let report = p.run_incremental(now)?;
            print_report(&report);
            if !no_heal && !report.gaps.is_empty() {
                println!("healing gapped repos");
                print_report(&p.heal_gaps(&report, now)?);
            }
        }
    }
    save_graph(&p, &layout)
}

fn heal(config: &Config, a: crate::HealArgs) -> Result<()> {
    let mut p = open_pipeline(config)?;
    p.discover()?;
    let gaps = p.check_gaps()?;
    if a.check {
        if gaps.is_empty() {
            println!("no gaps found");
        }
        for g in &gaps {
            println!("{}", describe_gap(g));
        }
        let locked = &p.state().healing_lock;
        if !locked.is_empty() {
            println!(
                "locked: {}",
                locked.iter().cloned().collect::<Vec<_>>().join(", ")
            );
        }
        return Ok(());
    }
    let now = now(&a.clock)?;
    let repos: Vec<String> = if a.repos.is_empty() {
        let mut set: BTreeSet<String> = gaps.into_iter().map(|g| g.repo).collect();
        set.extend(p.state().healing_lock.iter().cloned());
        set.into_iter().collect()
    } else {
        a.repos
    };
    if repos.is_empty() {
        println!("nothing to heal");
        return Ok(());
    }
    let report = p.heal(&repos, now)?;
    print_report(&report);
    save_graph(&p, &config.layout())?;
    if !report.heal_failed.is_empty() {
        bail!("heal failed for {}", report.heal_failed.join(", "));
    }
    Ok(())
}

fn index(layout: &DataLayout, cmd: IndexCommand) -> Result<()> {
    let p = Pipeline::open(layout.events_dir(), layout.state_dir())?;
    let graph = p.graph().snapshot();
    let pair = match cmd {
        IndexCommand::Build => IndexPair::build(&graph),
        IndexCommand::Refresh => load_indices(layout)?.refresh(&graph),
    };
    pair.artifact.save(&layout.artifact_index())?;
    pair.expert.save(&layout.expert_index())?;
    println!(
        "artifact index: {} documents, {} terms",
        pair.artifact.doc_count(),
        pair.artifact.vocabulary_size()
    );
    println!(
        "expert index: {} documents, {} terms",
        pair.expert.doc_count(),
        pair.expert.vocabulary_size()
    );
    Ok(())
}

fn ranked_lines(out: &mut String, label: &str, results: &[RankedResult]) {
    let _ = writeln!(out, "{label}:");
    if results.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for r in results {
        let proximity = r
            .proximity
            .map(|p| p.to_string())
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "  {:>3}  {:<32} relevance={:.6} proximity={}",
            r.final_rank, r.doc_id, r.relevance, proximity
        );
    }
}

fn recommend_cmd(config: &Config, a: crate::RecommendArgs) -> Result<()> {
    let layout = config.layout();
    let requester = parse_user(&a.user)?;
    let k = a.k.unwrap_or(config.default_k);
    if k == 0 {
        bail!("-k must be at least 1");
    }
    let p = Pipeline::open(layout.events_dir(), layout.state_dir())?;
    let indices = load_indices(&layout)?;
    let graph = p.graph().snapshot();
    let opts = RecommendOptions {
        rerank: !a.no_rerank,
        ..RecommendOptions::default()
    };
    let q = RecommendationQuery::new(a.title, a.description, requester).with_k(k);
    let resp = recommend(&q, &indices.artifact, &indices.expert, &graph, &opts);
    // Timings are left out so that the output is reproducible.
    match a.format {
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "artifacts": resp.artifacts,
                "experts": resp.experts,
                "empty_query": resp.empty_query,
                "cold_requester": resp.cold_requester,
            }))?
        ),
        OutputFormat::Text => {
            let mut out = String::new();
            if resp.empty_query {
                out.push_str("query has no searchable terms\n");
            }
            if resp.cold_requester {
                out.push_str(
                    "requester has no graph connections; results are in relevance order\n",
                );
            }
            ranked_lines(&mut out, "artifacts", &resp.artifacts);
            ranked_lines(&mut out, "experts", &resp.experts);
            print!("{out}");
        }
    }
    Ok(())
}

fn feed(layout: &DataLayout, a: crate::FeedArgs) -> Result<()> {
    let user = parse_user(&a.user)?;
    let view: FeedView = a.view.parse().context("--view")?;
    let p = Pipeline::open(layout.events_dir(), layout.state_dir())?;
    let follows = FollowStore::open(layout.follows())?;
    let graph = p.graph().snapshot();
    let items = get_feed(
        &graph,
        &p.applied_events(),
        &follows,
        &user,
        view,
        a.limit.unwrap_or(DEFAULT_FEED_LIMIT),
    )?;
    match a.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&items)?),
        OutputFormat::Text => {
            if items.is_empty() {
                println!("no activity");
            }
            for i in &items {
                let actor = i
                    .actor
                    .as_ref()
                    .map(|a| a.to_string())
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{}  {:<16} {:<28} by {:<20} in {}{}",
                    format_ts(&i.timestamp),
                    i.event_kind.to_string(),
                    i.subject.to_string(),
                    actor,
                    i.repo,
                    if i.followed { "  [followed]" } else { "" }
                );
            }
        }
    }
    Ok(())
}

fn serve(config: Config, a: crate::ServeArgs) -> Result<()> {
    let port = a.port.unwrap_or(config.port);
    let addr: SocketAddr = format!("{}:{port}", a.host)
        .parse()
        .with_context(|| format!("--host {:?} is not an IP address", a.host))?;
    let state = Arc::new(AppState::load(&config)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = sociograph_service::start(state, addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", handle.addr());
        tokio::signal::ctrl_c().await?;
        println!("shutting down");
        handle.shutdown().await?;
        Ok(())
    })
}

fn eval(layout: &DataLayout, a: crate::EvalArgs) -> Result<()> {
    let configs = a
        .configs
        .iter()
        .map(|c| c.parse::<AblationConfig>())
        .collect::<Result<Vec<_>, _>>()
        .context("--configs")?;
    if a.k_values.is_empty() || a.k_values.contains(&0) {
        bail!("--k-values must be positive integers");
    }
    let set = EvalSet::load(&layout.synth_dir())
        .context("reading the synthetic corpus metadata; run `sociograph synth` first")?;
    let p = Pipeline::open(layout.events_dir(), layout.state_dir())?;
    let graph = p.graph().snapshot();
    if !set.manifest.matches(&graph.stats()) {
        eprintln!("warning: the ingested graph does not match the synthetic corpus manifest");
    }
    let table = evaluate(&graph, &set, &configs, &a.k_values)?;
    let top3 = planted_expert_hit_rate(&graph, &IndexPair::build(&graph), &set, 3);
    match a.format {
        OutputFormat::Json => println!(
            "{}",
            serde_json::to_string_pretty(
                &json!({"table": table, "planted_expert_hit_rate_at_3": top3})
            )?
        ),
        OutputFormat::Text => {
            print!("{}", table.to_text());
            println!("planted-expert hit rate @3: {top3:.4}");
        }
    }
    Ok(())
}
