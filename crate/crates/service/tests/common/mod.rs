//! Shared fixtures for the HTTP tests: an in-process server over the default
//! synthetic corpus and telemetry sinks that can be inspected or slowed down.

#![allow(dead_code)]

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use sociograph_core::feed::FollowStore;
use sociograph_core::graph::{Graph, SharedGraph};
use sociograph_core::index::IndexPair;
use sociograph_core::ingest::{replay, sort_chronologically, EventRecord};
use sociograph_core::synth::{generate, Corpus, CorpusSpec};
use sociograph_service::{
    start, AppState, ServerHandle, Telemetry, TelemetryRecord, TelemetrySink,
};

pub struct Fixture {
    pub corpus: Corpus,
    pub events: Arc<Vec<EventRecord>>,
    pub graph: Graph,
    pub indices: IndexPair,
}

/// The default corpus, built once per test binary.
pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let corpus = generate(&CorpusSpec::default()).expect("default corpus");
        let mut events = corpus.all_events();
        sort_chronologically(&mut events);
        let graph = replay(&events).expect("replay");
        let indices = IndexPair::build(&graph);
        Fixture {
            corpus,
            events: Arc::new(events),
            graph,
            indices,
        }
    })
}

/// Collects records in memory.
#[derive(Clone, Default)]
pub struct MemorySink(pub Arc<Mutex<Vec<TelemetryRecord>>>);

impl MemorySink {
    pub fn records(&self) -> Vec<TelemetryRecord> {
        self.0.lock().unwrap().clone()
    }
}

impl TelemetrySink for MemorySink {
    fn write(&mut self, record: &TelemetryRecord) -> io::Result<()> {
        self.0.lock().unwrap().push(record.clone());
        Ok(())
    }
}

/// Takes `delay` for every write, like a saturated disk or database.
pub struct StalledSink {
    pub delay: Duration,
    pub inner: MemorySink,
}

impl TelemetrySink for StalledSink {
    fn write(&mut self, record: &TelemetryRecord) -> io::Result<()> {
        std::thread::sleep(self.delay);
        self.inner.write(record)
    }
}

pub fn state_with(sink: impl TelemetrySink, capacity: usize) -> Arc<AppState> {
    let f = fixture();
    Arc::new(AppState::new(
        SharedGraph::new(f.graph.clone()),
        Arc::clone(&f.events),
        f.indices.clone(),
        FollowStore::new(),
        Arc::new(Telemetry::spawn(sink, capacity)),
        10,
    ))
}

/// A corpus small enough that every feed fits in one page, with its owners.
pub fn small_state() -> (Arc<AppState>, Vec<String>) {
    let corpus = generate(&CorpusSpec {
        n_devs: 6,
        prs_per_dev: 3,
        ..CorpusSpec::default()
    })
    .expect("small corpus");
    let mut events = corpus.all_events();
    sort_chronologically(&mut events);
    let graph = replay(&events).expect("replay");
    let indices = IndexPair::build(&graph);
    let owners = corpus.queries.iter().map(|q| q.owner.clone()).collect();
    let state = AppState::new(
        SharedGraph::new(graph),
        Arc::new(events),
        indices,
        FollowStore::new(),
        Arc::new(Telemetry::spawn(MemorySink::default(), 64)),
        10,
    );
    (Arc::new(state), owners)
}

pub async fn serve(state: Arc<AppState>) -> ServerHandle {
    start(state, SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .expect("bind")
}

pub fn url(handle: &ServerHandle, path: &str) -> String {
    format!("http://{}{path}", handle.addr())
}

pub fn client() -> reqwest::Client {
    reqwest::Client::builder().build().expect("http client")
}

/// Recommendation request bodies built from the corpus evaluation queries.
pub fn query_bodies() -> Vec<serde_json::Value> {
    fixture()
        .corpus
        .queries
        .iter()
        .map(|q| {
            serde_json::json!({
                "title": q.title,
                "description": q.description,
                "requester": q.owner,
            })
        })
        .collect()
}

/// POSTs `body` to /recommend and returns the wall-clock latency.
pub async fn timed_recommend(
    client: &reqwest::Client,
    handle: &ServerHandle,
    body: &serde_json::Value,
) -> Duration {
    let t = Instant::now();
    let resp = client
        .post(url(handle, "/recommend"))
        .json(body)
        .send()
        .await
        .expect("request");
    assert!(resp.status().is_success(), "status {}", resp.status());
    resp.bytes().await.expect("body");
    t.elapsed()
}

/// Nearest-rank percentile of a sample.
pub fn percentile(samples: &[Duration], percent: usize) -> Duration {
    let mut sorted = samples.to_vec();
    sorted.sort();
    let rank = (percent * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}
