//! Asynchronous telemetry: request handlers hand records to a bounded queue
//! and a background thread writes them to the sink. A slow or broken sink
//! can drop records but never delays a response.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::Mutex;
use std::thread::JoinHandle;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const DEFAULT_QUEUE_CAPACITY: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Search,
    Click,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub kind: RecordKind,
    pub request_id: u64,
    pub query: String,
    pub user: String,
    pub results: Vec<String>,
    pub clicked: Option<String>,
    pub response_time_ms: f64,
    pub timestamp: DateTime<Utc>,
}

/// Destination for telemetry lines.
pub trait TelemetrySink: Send + 'static {
    fn write(&mut self, record: &TelemetryRecord) -> io::Result<()>;
}

/// Appends one JSON object per line to a file.
pub struct NdjsonFileSink {
    file: File,
}

impl NdjsonFileSink {
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(NdjsonFileSink { file })
    }
}

impl TelemetrySink for NdjsonFileSink {
    fn write(&mut self, record: &TelemetryRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Handle to the telemetry worker.
pub struct Telemetry {
    tx: Mutex<Option<SyncSender<TelemetryRecord>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    dropped: AtomicU64,
    written: std::sync::Arc<AtomicU64>,
}

impl Telemetry {
    pub fn spawn(mut sink: impl TelemetrySink, capacity: usize) -> Self {
        let (tx, rx) = sync_channel::<TelemetryRecord>(capacity.max(1));
        let written = std::sync::Arc::new(AtomicU64::new(0));
        let counter = std::sync::Arc::clone(&written);
        let worker = std::thread::Builder::new()
            .name("telemetry".into())
            .spawn(move || {
                for record in rx {
                    match sink.write(&record) {
                        Ok(()) => {
                            counter.fetch_add(1, Ordering::Relaxed);
                        }
                        Err(e) => {
                            tracing::warn!(request_id = record.request_id, "telemetry dropped: {e}")
                        }
                    }
                }
            })
            .expect("spawning the telemetry thread");
        Telemetry {
            tx: Mutex::new(Some(tx)),
            worker: Mutex::new(Some(worker)),
            dropped: AtomicU64::new(0),
            written,
        }
    }

    /// Queues a record without waiting. Returns false if it had to be dropped.
    pub fn log(&self, record: TelemetryRecord) -> bool {
        let guard = self.tx.lock().unwrap_or_else(|p| p.into_inner());
        let Some(tx) = guard.as_ref() else {
            self.dropped.fetch_add(1, Ordering::Relaxed);
            return false;
        };
        match tx.try_send(record) {
            Ok(()) => true,
            Err(TrySendError::Full(r) | TrySendError::Disconnected(r)) => {
                tracing::warn!(
                    request_id = r.request_id,
                    "telemetry queue unavailable; record dropped"
                );
                self.dropped.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn written(&self) -> u64 {
        self.written.load(Ordering::Relaxed)
    }

    /// Stops accepting records and waits until everything queued is written.
    pub fn close(&self) {
        self.tx.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(worker) = self.worker.lock().unwrap_or_else(|p| p.into_inner()).take() {
            let _ = worker.join();
        }
    }
}

impl Drop for Telemetry {
    fn drop(&mut self) {
        self.close();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::mpsc::{channel, Receiver};
    use std::time::{Duration, Instant};

    fn record(id: u64) -> TelemetryRecord {
        TelemetryRecord {
            kind: RecordKind::Search,
            request_id: id,
            query: "q".into(),
            user: "user:u".into(),
            results: vec![],
            clicked: None,
            response_time_ms: 0.5,
            timestamp: Utc::now(),
        }
    }

    struct Gate(Receiver<()>);

    impl TelemetrySink for Gate {
        fn write(&mut self, _: &TelemetryRecord) -> io::Result<()> {
            let _ = self.0.recv();
            Ok(())
        }
    }

    #[test]
    fn full_queue_drops_instead_of_blocking() {
        let (release, gate) = channel();
        let t = Telemetry::spawn(Gate(gate), 2);
        let started = Instant::now();
        let accepted = (0..10).filter(|i| t.log(record(*i))).count();
        assert!(started.elapsed() < Duration::from_millis(500));
        assert!(accepted < 10);
        assert_eq!(t.dropped() as usize, 10 - accepted);
        drop(release);
        t.close();
    }

    #[test]
    fn file_sink_writes_one_line_per_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ndjson");
        let t = Telemetry::spawn(NdjsonFileSink::open(&path).unwrap(), 16);
        for i in 0..5 {
            assert!(t.log(record(i)));
        }
        t.close();
        let text = std::fs::read_to_string(&path).unwrap();
        let ids: Vec<u64> = text
            .lines()
            .map(|l| {
                serde_json::from_str::<TelemetryRecord>(l)
                    .unwrap()
                    .request_id
            })
            .collect();
        assert_eq!(ids, [0, 1, 2, 3, 4]);
        assert_eq!(t.written(), 5);
    }
}
