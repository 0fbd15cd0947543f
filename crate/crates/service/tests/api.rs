mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use reqwest::StatusCode;
use serde_json::{json, Value};
use sociograph_core::config::Config;
use sociograph_core::graph::NodeId;
use sociograph_core::recommend::{recommend, RankedResult, RecommendOptions, RecommendationQuery};
use sociograph_service::{AppState, RecordKind};
use sociograph_testkit::graphs::graph_difference;

async fn get_json(client: &reqwest::Client, url: String) -> (StatusCode, Value) {
    let resp = client.get(url).send().await.unwrap();
    (resp.status(), resp.json().await.unwrap())
}

async fn post_json(client: &reqwest::Client, url: String, body: &Value) -> (StatusCode, Value) {
    let resp = client.post(url).json(body).send().await.unwrap();
    (resp.status(), resp.json().await.unwrap())
}

fn assert_error(status: StatusCode, body: &Value, want_status: StatusCode, code: &str) {
    assert_eq!(status, want_status, "{body}");
    assert_eq!(body["error"], code, "{body}");
    assert!(
        body["message"].as_str().is_some_and(|m| !m.is_empty()),
        "{body}"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn health_reports_graph_and_index_sizes() {
    let handle = serve(state_with(MemorySink::default(), 64)).await;
    let (status, body) = get_json(&client(), url(&handle, "/health")).await;
    assert_eq!(status, StatusCode::OK);
    let f = fixture();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["nodes"], f.graph.node_count());
    assert_eq!(body["artifact_docs"], f.indices.artifact.doc_count());
    assert_eq!(body["expert_docs"], f.indices.expert.doc_count());
    handle.shutdown().await.unwrap();
}

/// Ids, ranks and proximities must be identical. Relevance is compared to
/// 1e-12 because the client's JSON float parsing may differ from the
/// server's value in the last place.
fn assert_same_results(reply: &Value, direct: &[RankedResult]) {
    let served: Vec<RankedResult> = serde_json::from_value(reply.clone()).unwrap();
    assert_eq!(served.len(), direct.len());
    for (s, d) in served.iter().zip(direct) {
        assert_eq!(
            (&s.doc_id, s.doc_kind, s.proximity, s.final_rank),
            (&d.doc_id, d.doc_kind, d.proximity, d.final_rank)
        );
        assert!((s.relevance - d.relevance).abs() <= 1e-12 * d.relevance.abs().max(1.0));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn recommend_matches_a_direct_library_call() {
    let handle = serve(state_with(MemorySink::default(), 1024)).await;
    let client = client();
    let f = fixture();
    for q in f.corpus.queries.iter().take(15) {
        let body = json!({"title": q.title, "description": q.description, "requester": format!("user:{}", q.owner), "k": 7});
        let (status, reply) = post_json(&client, url(&handle, "/recommend"), &body).await;
        assert_eq!(status, StatusCode::OK);
        let query = RecommendationQuery::new(
            q.title.clone(),
            q.description.clone(),
            NodeId::user(q.owner.as_str()),
        )
        .with_k(7);
        let direct = recommend(
            &query,
            &f.indices.artifact,
            &f.indices.expert,
            &f.graph,
            &RecommendOptions::default(),
        );
        assert_same_results(&reply["artifacts"], &direct.artifacts);
        assert_same_results(&reply["experts"], &direct.experts);
        assert_eq!(reply["empty_query"], direct.empty_query);
        assert_eq!(reply["cold_requester"], direct.cold_requester);
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn latency_budget_and_one_telemetry_record_per_request() {
    let sink = MemorySink::default();
    let handle = serve(state_with(sink.clone(), 4096)).await;
    let client = client();
    let bodies = query_bodies();
    // Warm the connection pool before measuring.
    timed_recommend(&client, &handle, &bodies[0]).await;
    let mut samples = Vec::new();
    for body in bodies.iter().cycle().take(200) {
        samples.push(timed_recommend(&client, &handle, body).await);
    }
    let p95 = percentile(&samples, 95);
    assert!(p95 < Duration::from_millis(500), "p95 {p95:?}");

    let state = Arc::clone(handle.state());
    handle.shutdown().await.unwrap();
    let records = sink.records();
    assert_eq!(records.len(), 201);
    assert_eq!(state.telemetry.dropped(), 0);
    assert!(records.iter().all(|r| r.kind == RecordKind::Search));
    let mut ids: Vec<u64> = records.iter().map(|r| r.request_id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 201, "request ids are unique");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stalled_sink_does_not_slow_requests() {
    let fast = serve(state_with(MemorySink::default(), 4096)).await;
    let stalled_sink = MemorySink::default();
    let stalled = serve(state_with(
        StalledSink {
            delay: Duration::from_millis(100),
            inner: stalled_sink.clone(),
        },
        8,
    ))
    .await;
    let client = client();
    let bodies = query_bodies();
    timed_recommend(&client, &fast, &bodies[0]).await;
    timed_recommend(&client, &stalled, &bodies[0]).await;

    // Interleaved so that machine noise hits both sides alike.
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for body in bodies.iter().take(60) {
        a.push(timed_recommend(&client, &fast, body).await);
        b.push(timed_recommend(&client, &stalled, body).await);
    }
    let (fast_median, stalled_median) = (percentile(&a, 50), percentile(&b, 50));
    assert!(
        stalled_median <= fast_median * 2,
        "stalled median {stalled_median:?} vs healthy {fast_median:?}"
    );
    // Sixty 100 ms writes would take six seconds if requests waited on them.
    let total: Duration = b.iter().sum();
    assert!(
        total < Duration::from_secs(6),
        "stalled side took {total:?}"
    );

    let state = Arc::clone(stalled.state());
    stalled.shutdown().await.unwrap();
    fast.shutdown().await.unwrap();
    let written = stalled_sink.records().len() as u64;
    assert!(state.telemetry.dropped() > 0, "a full queue drops records");
    assert_eq!(
        written + state.telemetry.dropped(),
        61,
        "every record is either written or counted as dropped"
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn click_is_logged_against_its_search() {
    let sink = MemorySink::default();
    let handle = serve(state_with(sink.clone(), 64)).await;
    let client = client();
    let body = &query_bodies()[0];
    let (_, reply) = post_json(&client, url(&handle, "/recommend"), body).await;
    let request_id = reply["request_id"].as_u64().unwrap();
    let doc = reply["artifacts"][0]["doc_id"]
        .as_str()
        .unwrap()
        .to_string();

    let (status, ack) = post_json(
        &client,
        url(&handle, "/click"),
        &json!({"request_id": request_id, "doc_id": doc}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["logged"], true);

    let (status, err) = post_json(
        &client,
        url(&handle, "/click"),
        &json!({"request_id": 999_999, "doc_id": doc}),
    )
    .await;
    assert_error(status, &err, StatusCode::NOT_FOUND, "not_found");
    let (status, err) = post_json(
        &client,
        url(&handle, "/click"),
        &json!({"request_id": request_id, "doc_id": "pull_request:not-shown"}),
    )
    .await;
    assert_error(status, &err, StatusCode::BAD_REQUEST, "invalid_argument");

    handle.shutdown().await.unwrap();
    let records = sink.records();
    assert_eq!(records.len(), 2);
    let click = &records[1];
    assert_eq!(click.kind, RecordKind::Click);
    assert_eq!(click.request_id, request_id);
    assert_eq!(click.clicked.as_deref(), Some(doc.as_str()));
    assert_eq!(click.results, records[0].results);
    assert_eq!(click.query, records[0].query);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn errors_share_one_shape() {
    let handle = serve(state_with(MemorySink::default(), 64)).await;
    let client = client();
    let raw = client
        .post(url(&handle, "/recommend"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    let status = raw.status();
    assert_error(
        status,
        &raw.json::<Value>().await.unwrap(),
        StatusCode::BAD_REQUEST,
        "invalid_argument",
    );

    let cases = [
        json!({"title": "x", "requester": "dev00", "k": 0}),
        json!({"title": "x", "requester": "dev00", "k": 101}),
        json!({"title": "x", "requester": "pull_request:1"}),
        json!({"title": "x", "requester": ""}),
        json!({"requester": "dev00"}),
    ];
    for body in &cases {
        let (status, err) = post_json(&client, url(&handle, "/recommend"), body).await;
        assert_error(status, &err, StatusCode::BAD_REQUEST, "invalid_argument");
    }

    let (status, err) = get_json(&client, url(&handle, "/feed/nobody")).await;
    assert_error(status, &err, StatusCode::NOT_FOUND, "not_found");
    let (status, err) = get_json(&client, url(&handle, "/feed/dev00?view=sideways")).await;
    assert_error(status, &err, StatusCode::BAD_REQUEST, "invalid_argument");
    let (status, err) = get_json(&client, url(&handle, "/feed/dev00?limit=0")).await;
    assert_error(status, &err, StatusCode::BAD_REQUEST, "invalid_argument");
    let (status, err) = get_json(&client, url(&handle, "/homepage/nobody")).await;
    assert_error(status, &err, StatusCode::NOT_FOUND, "not_found");
    let (status, err) = get_json(&client, url(&handle, "/no/such/route")).await;
    assert_error(status, &err, StatusCode::NOT_FOUND, "not_found");
    let (status, err) = post_json(
        &client,
        url(&handle, "/follow"),
        &json!({"user": "dev00", "item": "pull_request:does-not-exist", "followed": true}),
    )
    .await;
    assert_error(status, &err, StatusCode::NOT_FOUND, "not_found");
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn follow_reorders_only_the_relevance_feed() {
    let (state, owners) = small_state();
    let handle = serve(state).await;
    let client = client();
    // A user whose whole feed fits in one page, so reordering cannot push
    // items past the limit.
    let mut user = None;
    for owner in owners {
        let (_, items) =
            get_json(&client, url(&handle, &format!("/feed/{owner}?limit=1000"))).await;
        let n = items.as_array().unwrap().len();
        if n > 2 && n < 1000 {
            user = Some(owner);
            break;
        }
    }
    let user = user.expect("some query owner has a feed shorter than one page");
    let feed = |view: &str| url(&handle, &format!("/feed/{user}?view={view}&limit=1000"));
    let ids = |v: &Value| -> Vec<String> {
        v.as_array()
            .unwrap()
            .iter()
            .map(|i| i["event_id"].as_str().unwrap().to_string())
            .collect()
    };

    let (status, recent_before) = get_json(&client, feed("most_recent")).await;
    assert_eq!(status, StatusCode::OK);
    let (_, relevance_before) = get_json(&client, feed("relevance")).await;
    let items = relevance_before.as_array().unwrap();
    assert!(items.len() > 2, "fixture user needs a non-trivial feed");
    let target = items.last().unwrap()["subject"]
        .as_str()
        .unwrap()
        .to_string();

    let (status, set) = post_json(
        &client,
        url(&handle, "/follow"),
        &json!({"user": user, "item": target, "followed": true}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert!(set["followed_items"]
        .as_array()
        .unwrap()
        .iter()
        .any(|i| i == &json!(target)));

    let (_, recent_after) = get_json(&client, feed("most_recent")).await;
    let (_, relevance_after) = get_json(&client, feed("relevance")).await;
    assert_eq!(ids(&recent_after), ids(&recent_before));
    assert_eq!(relevance_after[0]["subject"], json!(target));
    assert_eq!(relevance_after[0]["followed"], true);
    let mut a = ids(&relevance_after);
    let mut b = ids(&relevance_before);
    a.sort();
    b.sort();
    assert_eq!(a, b, "following reorders but never adds or removes items");
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn homepage_has_every_section() {
    let handle = serve(state_with(MemorySink::default(), 64)).await;
    let user = &fixture().corpus.queries[0].owner;
    let (status, page) = get_json(
        &client(),
        url(&handle, &format!("/homepage/user:{user}?limit=5")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    for key in [
        "user_details",
        "active_repositories",
        "active_pull_requests",
        "active_work_items",
        "active_code_reviews",
        "feed",
        "related_people",
    ] {
        assert!(page.get(key).is_some(), "missing {key}");
    }
    assert_eq!(page["user_details"]["user"], json!(format!("user:{user}")));
    assert!(!page["user_details"]["expertise"]
        .as_array()
        .unwrap()
        .is_empty());
    assert!(page["feed"].as_array().unwrap().len() <= 5);
    assert!(!page["active_pull_requests"].as_array().unwrap().is_empty());
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn serving_requests_never_mutates_the_graph() {
    let state = state_with(MemorySink::default(), 1024);
    let handle = serve(Arc::clone(&state)).await;
    let client = client();
    let user = &fixture().corpus.queries[0].owner;
    for body in query_bodies().iter().take(10) {
        timed_recommend(&client, &handle, body).await;
    }
    get_json(&client, url(&handle, &format!("/homepage/{user}"))).await;
    get_json(
        &client,
        url(&handle, &format!("/feed/{user}?view=relevance")),
    )
    .await;
    handle.shutdown().await.unwrap();
    assert_eq!(
        graph_difference(&state.graph.read(), &fixture().graph),
        None
    );
}

#[test]
fn loading_without_indices_explains_what_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().to_path_buf(),
        ..Config::default()
    };
    std::fs::create_dir_all(config.layout().events_dir()).unwrap();
    let err = AppState::load(&config)
        .err()
        .expect("load must fail without indices");
    assert!(err.to_string().contains("sociograph index build"), "{err}");
}
