//! Event-file ingestion: discovery, registry bookkeeping, bootstrap and
//! incremental replay, gap detection and self-healing.

pub mod event;
pub mod pipeline;
pub mod registry;
pub mod state;

pub use event::{
    classify_file, parse_events, read_events_file, replay, sort_chronologically, write_events,
    write_events_file, EventKind, EventRecord, ParsedEvents, RowError,
};
pub use pipeline::{
    detect_gap, gap_finding, GapFinding, IngestReport, Pipeline, SkippedFile, REGISTRY_FILE,
    STATE_FILE,
};
pub use registry::{EventFileName, FileStatus, Registry, RegistryEntry, StreamKind};
pub use state::{PipelineState, DEFAULT_RETENTION_DAYS};
