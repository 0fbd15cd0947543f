//! HTTP service over the graph, the two search indices and the follow store.
//!
//! Every request reads shared, immutable snapshots except `/follow`, which
//! updates the follow store. Search requests queue a telemetry record that a
//! background thread writes, so sink latency never reaches the client.

mod error;
mod routes;
pub mod telemetry;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};

use sociograph_core::config::Config;
use sociograph_core::feed::FollowStore;
use sociograph_core::graph::SharedGraph;
use sociograph_core::index::{IndexPair, InvertedIndex};
use sociograph_core::ingest::{EventRecord, Pipeline};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::{ApiError, ErrorBody, LoadError};
pub use routes::router;
pub use telemetry::{NdjsonFileSink, RecordKind, Telemetry, TelemetryRecord, TelemetrySink};

/// Searches remembered so that later clicks can be attributed to them.
const REMEMBERED_SEARCHES: usize = 10_000;

/// What a click needs to know about the search it belongs to.
#[derive(Debug, Clone)]
pub(crate) struct SearchLog {
    pub query: String,
    pub user: String,
    pub results: Vec<String>,
}

pub struct AppState {
    pub graph: SharedGraph,
    pub events: Arc<Vec<EventRecord>>,
    pub indices: Arc<IndexPair>,
    pub follows: Mutex<FollowStore>,
    pub telemetry: Arc<Telemetry>,
    pub default_k: usize,
    pub(crate) next_request: AtomicU64,
    pub(crate) searches: Mutex<BTreeMap<u64, SearchLog>>,
}

impl AppState {
    pub fn new(
        graph: SharedGraph,
        events: Arc<Vec<EventRecord>>,
        indices: IndexPair,
        follows: FollowStore,
        telemetry: Arc<Telemetry>,
        default_k: usize,
    ) -> Self {
        AppState {
            graph,
            events,
            indices: Arc::new(indices),
            follows: Mutex::new(follows),
            telemetry,
            default_k,
            next_request: AtomicU64::new(1),
            searches: Mutex::new(BTreeMap::new()),
        }
    }

    /// Loads the ingested graph, the saved indices and the follow store from
    /// the configured data directory and opens the telemetry log there.
    pub fn load(config: &Config) -> Result<Self, LoadError> {
        let layout = config.layout();
        let pipeline = Pipeline::open(layout.events_dir(), layout.state_dir())?;
        let load_index = |path: &std::path::Path| {
            InvertedIndex::load(path).map_err(|e| {
                LoadError(format!(
                    "cannot read index {}: {e}; run `sociograph index build` first",
                    path.display()
                ))
            })
        };
        let indices = IndexPair {
            artifact: load_index(&layout.artifact_index())?,
            expert: load_index(&layout.expert_index())?,
        };
        let follows = FollowStore::open(layout.follows())?;
        let sink = NdjsonFileSink::open(&layout.telemetry())
            .map_err(|e| LoadError(format!("cannot open telemetry log: {e}")))?;
        Ok(AppState::new(
            pipeline.graph(),
            pipeline.applied_events(),
            indices,
            follows,
            Arc::new(Telemetry::spawn(sink, telemetry::DEFAULT_QUEUE_CAPACITY)),
            config.default_k,
        ))
    }

    pub(crate) fn remember(&self, request_id: u64, log: SearchLog) {
        let mut searches = self.searches.lock().unwrap_or_else(|p| p.into_inner());
        searches.insert(request_id, log);
        while searches.len() > REMEMBERED_SEARCHES {
            searches.pop_first();
        }
    }
}

/// A running server. Dropping the handle without calling `shutdown` leaves
/// the server running until the runtime stops.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
    state: Arc<AppState>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    /// Stops accepting connections, lets in-flight requests finish and then
    /// flushes queued telemetry.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let served = self.task.await.map_err(std::io::Error::other)?;
        let telemetry = Arc::clone(&self.state.telemetry);
        tokio::task::spawn_blocking(move || telemetry.close())
            .await
            .map_err(std::io::Error::other)?;
        served
    }
}

/// Binds `addr` and serves in a background task.
pub async fn start(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let app = router(Arc::clone(&state));
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    tracing::info!(%addr, "listening");
    Ok(ServerHandle {
        addr,
        stop: Some(stop),
        task,
        state,
    })
}
