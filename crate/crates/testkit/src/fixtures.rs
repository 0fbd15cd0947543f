use std::collections::BTreeSet;

use chrono::{DateTime, TimeZone, Utc};
use sociograph_core::ingest::{EventKind, EventRecord};

fn at(day: u32, hour: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, day, hour, 0, 0).unwrap()
}

fn ev(id: &str, repo: &str, kind: EventKind, day: u32, hour: u32) -> EventRecord {
    EventRecord::new(id, repo, kind, at(day, hour))
}

/// A small organisation for feed tests.
///
/// mia manages rob and ann; sam reports to rob. mia only works in `core`,
/// rob in `web`, sam in `ops`; zed is unrelated and works in `misc`.
/// f05 and f06 share a timestamp.
pub fn feed_events() -> Vec<EventRecord> {
    vec![
        ev("f00", "org", EventKind::UserReportsTo, 1, 0)
            .with("user", "rob")
            .with("manager", "mia"),
        ev("f01", "org", EventKind::UserReportsTo, 1, 0)
            .with("user", "ann")
            .with("manager", "mia"),
        ev("f02", "org", EventKind::UserReportsTo, 1, 0)
            .with("user", "sam")
            .with("manager", "rob"),
        ev("f03", "core", EventKind::PrCreated, 2, 9)
            .with("pr", "1")
            .with("author", "mia")
            .with("title", "Cache warmup"),
        ev("f04", "web", EventKind::PrCreated, 3, 9)
            .with("pr", "2")
            .with("author", "rob")
            .with("title", "Login form"),
        ev("f05", "ops", EventKind::PrCreated, 4, 9)
            .with("pr", "3")
            .with("author", "sam")
            .with("title", "Deploy script"),
        ev("f06", "core", EventKind::ReviewAssigned, 4, 9)
            .with("pr", "1")
            .with("reviewer", "ann"),
        ev("f07", "misc", EventKind::PrCreated, 5, 9)
            .with("pr", "4")
            .with("author", "zed")
            .with("title", "Unrelated"),
        ev("f08", "web", EventKind::ReviewCommented, 6, 9)
            .with("pr", "2")
            .with("user", "rob"),
        ev("f09", "core", EventKind::PrStateChanged, 7, 9)
            .with("pr", "1")
            .with("state", "completed"),
        ev("f10", "misc", EventKind::ReviewAssigned, 8, 9)
            .with("pr", "4")
            .with("reviewer", "zed"),
    ]
}

/// Ten queries with known first-relevant ranks, as ranked lists of ten ids
/// and relevant sets. The ranks are 1, 4, miss, 2, 1, 3, 7, 5, 10, miss.
pub fn metric_queries() -> Vec<(Vec<String>, BTreeSet<String>)> {
    let ranks: [Option<usize>; 10] = [
        Some(1),
        Some(4),
        None,
        Some(2),
        Some(1),
        Some(3),
        Some(7),
        Some(5),
        Some(10),
        None,
    ];
    ranks
        .iter()
        .enumerate()
        .map(|(q, rank)| {
            let ranked: Vec<String> = (1..=10).map(|i| format!("q{q}-d{i}")).collect();
            let mut relevant = BTreeSet::from([format!("q{q}-elsewhere")]);
            if let Some(r) = rank {
                relevant.insert(format!("q{q}-d{r}"));
                // A second relevant item lower down must not change the rank.
                if *r < 10 {
                    relevant.insert(format!("q{q}-d10"));
                }
            }
            (ranked, relevant)
        })
        .collect()
}

/// Three developers: alice and bob both touch mailbox syncing, carol works
/// on something else but reviews alice's change.
pub fn recommend_events() -> Vec<EventRecord> {
    vec![
        ev("r01", "mail", EventKind::PrCreated, 1, 9)
            .with("pr", "10")
            .with("author", "alice")
            .with("title", "Fix MailboxSyncEngine crash")
            .with("description", "mailbox sync engine crashes on retry"),
        ev("r02", "mail", EventKind::PrCreated, 2, 9)
            .with("pr", "11")
            .with("author", "bob")
            .with("title", "MailboxSyncEngine retry backoff")
            .with("description", "retry the mailbox sync engine with backoff"),
        ev("r03", "ui", EventKind::PrCreated, 3, 9)
            .with("pr", "12")
            .with("author", "carol")
            .with("title", "Dark theme")
            .with("description", "colour palette for the settings page"),
        ev("r04", "mail", EventKind::ReviewAssigned, 3, 10)
            .with("pr", "10")
            .with("reviewer", "carol"),
        ev("r05", "mail", EventKind::WiCreated, 1, 8)
            .with("wi", "90")
            .with("author", "alice")
            .with("title", "Mailbox sync crashes")
            .with("description", "sync engine crash when the mailbox is large"),
        ev("r06", "mail", EventKind::WiLinked, 1, 10)
            .with("wi", "90")
            .with("pr", "10"),
    ]
}
