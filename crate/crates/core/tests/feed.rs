use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sociograph_core::feed::{get_feed, FeedView, FollowStore};
use sociograph_core::graph::{Graph, NodeId};
use sociograph_core::ingest::{replay, EventRecord};
use sociograph_core::Error;
use sociograph_testkit::fixtures::feed_events;

fn setup() -> (Graph, Vec<EventRecord>) {
    let events = feed_events();
    (replay(&events).unwrap(), events)
}

fn feed_ids(
    g: &Graph,
    events: &[EventRecord],
    follows: &FollowStore,
    user: &str,
    view: FeedView,
) -> Vec<String> {
    get_feed(g, events, follows, &NodeId::user(user), view, 100)
        .unwrap()
        .into_iter()
        .map(|i| i.event_id)
        .collect()
}

#[test]
fn manager_sees_events_by_reports_outside_own_repos() {
    let (g, events) = setup();
    let ids = feed_ids(
        &g,
        &events,
        &FollowStore::new(),
        "mia",
        FeedView::MostRecent,
    );
    // rob works in web and sam (two levels down) in ops; mia only in core.
    for id in ["f04", "f08", "f05"] {
        assert!(ids.contains(&id.to_string()), "{id} missing from {ids:?}");
    }
    assert!(!ids.contains(&"f07".to_string()) && !ids.contains(&"f10".to_string()));
}

#[test]
fn reports_do_not_see_their_manager_outside_shared_repos() {
    let (g, events) = setup();
    let sam = feed_ids(
        &g,
        &events,
        &FollowStore::new(),
        "sam",
        FeedView::MostRecent,
    );
    assert_eq!(sam, ["f05"]);
    let zed = feed_ids(
        &g,
        &events,
        &FollowStore::new(),
        "zed",
        FeedView::MostRecent,
    );
    assert_eq!(zed, ["f10", "f07"]);
}

#[test]
fn most_recent_is_a_total_order_independent_of_input_order() {
    let (g, events) = setup();
    // Newest first; f05 and f06 share a timestamp and fall back to event id.
    let expected = ["f09", "f08", "f05", "f06", "f04", "f03"];
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut rng);
        let ids = feed_ids(
            &g,
            &shuffled,
            &FollowStore::new(),
            "mia",
            FeedView::MostRecent,
        );
        assert_eq!(ids, expected);
    }
}

#[test]
fn follow_changes_only_the_relevance_view() {
    let (g, events) = setup();
    let mut follows = FollowStore::new();
    let mia = NodeId::user("mia");
    let before_recent = feed_ids(&g, &events, &follows, "mia", FeedView::MostRecent);
    let before_relevance = feed_ids(&g, &events, &follows, "mia", FeedView::Relevance);
    let before_team = feed_ids(&g, &events, &follows, "mia", FeedView::TeamOnly);

    follows
        .set_follow(&g, &mia, &NodeId::pull_request("2"), true)
        .unwrap();
    let after_recent = feed_ids(&g, &events, &follows, "mia", FeedView::MostRecent);
    let after_relevance = feed_ids(&g, &events, &follows, "mia", FeedView::Relevance);
    let after_team = feed_ids(&g, &events, &follows, "mia", FeedView::TeamOnly);

    assert_eq!(after_recent, before_recent);
    assert_eq!(after_team, before_team);
    assert_ne!(after_relevance, before_relevance);
    // Followed PR2's events lead, newest first; the rest keep their relative order.
    assert_eq!(&after_relevance[..2], ["f08", "f04"]);
    let rest: Vec<&String> = before_relevance
        .iter()
        .filter(|id| *id != "f08" && *id != "f04")
        .collect();
    assert_eq!(after_relevance[2..].iter().collect::<Vec<_>>(), rest);

    let items = get_feed(&g, &events, &follows, &mia, FeedView::Relevance, 100).unwrap();
    assert!(items
        .iter()
        .all(|i| i.followed == (i.subject == NodeId::pull_request("2"))));

    follows
        .set_follow(&g, &mia, &NodeId::pull_request("2"), false)
        .unwrap();
    assert_eq!(
        feed_ids(&g, &events, &follows, "mia", FeedView::Relevance),
        before_relevance
    );
}

#[test]
fn following_a_repository_marks_its_events() {
    let (g, events) = setup();
    let mut follows = FollowStore::new();
    let mia = NodeId::user("mia");
    follows
        .set_follow(&g, &mia, &NodeId::repository("ops"), true)
        .unwrap();
    let ids = feed_ids(&g, &events, &follows, "mia", FeedView::Relevance);
    assert_eq!(ids[0], "f05");
}

#[test]
fn team_only_view_keeps_team_actors() {
    let (g, events) = setup();
    // ann's team is everyone reporting to mia; in ann's repos only her own review qualifies.
    let ids = feed_ids(&g, &events, &FollowStore::new(), "ann", FeedView::TeamOnly);
    assert_eq!(ids, ["f06"]);
}

#[test]
fn limit_truncates_after_ordering() {
    let (g, events) = setup();
    let items = get_feed(
        &g,
        &events,
        &FollowStore::new(),
        &NodeId::user("mia"),
        FeedView::MostRecent,
        2,
    )
    .unwrap();
    assert_eq!(
        items
            .iter()
            .map(|i| i.event_id.as_str())
            .collect::<Vec<_>>(),
        ["f09", "f08"]
    );
}

#[test]
fn follow_validation_and_persistence() {
    let (g, _) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("follows.tsv");
    let mut store = FollowStore::open(&path).unwrap();
    let mia = NodeId::user("mia");
    assert!(matches!(
        store.set_follow(&g, &mia, &NodeId::pull_request("404"), true),
        Err(Error::NotFound(_))
    ));
    assert!(matches!(
        store.set_follow(&g, &mia, &NodeId::user("rob"), true),
        Err(Error::InvalidArgument(_))
    ));
    let set = store
        .set_follow(&g, &mia, &NodeId::pull_request("1"), true)
        .unwrap();
    let again = store
        .set_follow(&g, &mia, &NodeId::pull_request("1"), true)
        .unwrap();
    assert_eq!(set, again);
    let reopened = FollowStore::open(&path).unwrap();
    assert!(reopened.is_following(&mia, &NodeId::pull_request("1")));
}

#[test]
fn unknown_user_is_not_found() {
    let (g, events) = setup();
    let err = get_feed(
        &g,
        &events,
        &FollowStore::new(),
        &NodeId::user("nobody"),
        FeedView::MostRecent,
        10,
    );
    assert!(matches!(err, Err(Error::NotFound(_))));
}
