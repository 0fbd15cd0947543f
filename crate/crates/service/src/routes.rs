use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sociograph_core::feed::{self, FeedItem, FeedView, FollowSet, HomePage, DEFAULT_FEED_LIMIT};
use sociograph_core::graph::{NodeId, NodeKind};
use sociograph_core::recommend::{
    recommend, RankedResult, RecommendOptions, RecommendationQuery, StepTimings,
};

use crate::telemetry::{RecordKind, TelemetryRecord};
use crate::{ApiError, AppState, SearchLog};

const MAX_K: usize = 100;
const MAX_FEED_LIMIT: usize = 1000;

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/recommend", post(recommend_handler))
        .route("/feed/{user}", get(feed_handler))
        .route("/follow", post(follow_handler))
        .route("/homepage/{user}", get(homepage_handler))
        .route("/click", post(click_handler))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

/// Bodies are decoded by hand so that malformed JSON yields the same error
/// shape as every other failure.
fn decode<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::invalid(format!("malformed request body: {e}")))
}

/// Accepts either a bare local id or a full `user:<id>`.
pub(crate) fn parse_user(raw: &str) -> Result<NodeId, ApiError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(ApiError::invalid("user id is empty"));
    }
    if raw.contains(':') {
        let id: NodeId = raw.parse().map_err(|e| ApiError::invalid(format!("{e}")))?;
        if id.kind() != NodeKind::User {
            return Err(ApiError::invalid(format!("{raw} is not a user")));
        }
        Ok(id)
    } else {
        Ok(NodeId::user(raw))
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<Shared>) -> Json<Value> {
    let nodes = state.graph.read().node_count();
    let artifact_docs = state.indices.artifact.doc_count();
    let expert_docs = state.indices.expert.doc_count();
    Json(json!({
        "status": "ok",
        "nodes": nodes,
        "docs": artifact_docs + expert_docs,
        "artifact_docs": artifact_docs,
        "expert_docs": expert_docs,
    }))
}

#[derive(Debug, Deserialize)]
struct RecommendRequest {
    title: String,
    #[serde(default)]
    description: String,
    requester: String,
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RecommendReply {
    pub request_id: u64,
    pub artifacts: Vec<RankedResult>,
    pub experts: Vec<RankedResult>,
    pub empty_query: bool,
    pub cold_requester: bool,
    pub timings: StepTimings,
}

async fn recommend_handler(State(state): State<Shared>, body: Bytes) -> ApiResult<RecommendReply> {
    let started = Instant::now();
    let req: RecommendRequest = decode(&body)?;
    let requester = parse_user(&req.requester)?;
    let k = req.k.unwrap_or(state.default_k);
    if k == 0 || k > MAX_K {
        return Err(ApiError::invalid(format!(
            "k must be between 1 and {MAX_K}"
        )));
    }
    let query = RecommendationQuery::new(req.title, req.description, requester).with_k(k);

    let worker = Arc::clone(&state);
    let q = query.clone();
    let resp = blocking(move || {
        let graph = worker.graph.read();
        Ok(recommend(
            &q,
            &worker.indices.artifact,
            &worker.indices.expert,
            &graph,
            &RecommendOptions::default(),
        ))
    })
    .await?;

    let request_id = state.next_request.fetch_add(1, Ordering::Relaxed);
    let results: Vec<String> = resp
        .artifacts
        .iter()
        .chain(&resp.experts)
        .map(|r| r.doc_id.clone())
        .collect();
    let query_text = format!("{}\n{}", query.title, query.description);
    let user = query.requester.to_string();
    state.remember(
        request_id,
        SearchLog {
            query: query_text.clone(),
            user: user.clone(),
            results: results.clone(),
        },
    );
    state.telemetry.log(TelemetryRecord {
        kind: RecordKind::Search,
        request_id,
        query: query_text,
        user,
        results,
        clicked: None,
        response_time_ms: started.elapsed().as_secs_f64() * 1000.0,
        timestamp: Utc::now(),
    });

    Ok(Json(RecommendReply {
        request_id,
        artifacts: resp.artifacts,
        experts: resp.experts,
        empty_query: resp.empty_query,
        cold_requester: resp.cold_requester,
        timings: resp.timings,
    }))
}

fn view_and_limit(params: &HashMap<String, String>) -> Result<(FeedView, usize), ApiError> {
    let view = match params.get("view") {
        Some(v) => v.parse::<FeedView>()?,
        None => FeedView::default(),
    };
    let limit = match params.get("limit") {
        Some(l) => l.parse::<usize>().map_err(|_| {
            ApiError::invalid(format!("limit must be a positive integer, got {l:?}"))
        })?,
        None => DEFAULT_FEED_LIMIT,
    };
    if limit == 0 || limit > MAX_FEED_LIMIT {
        return Err(ApiError::invalid(format!(
            "limit must be between 1 and {MAX_FEED_LIMIT}"
        )));
    }
    Ok((view, limit))
}

async fn feed_handler(
    State(state): State<Shared>,
    Path(user): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<Vec<FeedItem>> {
    let user = parse_user(&user)?;
    let (view, limit) = view_and_limit(&params)?;
    blocking(move || {
        let graph = state.graph.read();
        let follows = state.follows.lock().unwrap_or_else(|p| p.into_inner());
        Ok(Json(feed::get_feed(
            &graph,
            &state.events,
            &follows,
            &user,
            view,
            limit,
        )?))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct FollowRequest {
    user: String,
    item: String,
    followed: bool,
}

async fn follow_handler(State(state): State<Shared>, body: Bytes) -> ApiResult<FollowSet> {
    let req: FollowRequest = decode(&body)?;
    let user = parse_user(&req.user)?;
    let item: NodeId = req.item.parse().map_err(|e| {
        ApiError::invalid(format!(
            "item must be a node id such as repository:<name>: {e}"
        ))
    })?;
    blocking(move || {
        let graph = state.graph.read();
        let mut follows = state.follows.lock().unwrap_or_else(|p| p.into_inner());
        Ok(Json(follows.set_follow(
            &graph,
            &user,
            &item,
            req.followed,
        )?))
    })
    .await
}

async fn homepage_handler(
    State(state): State<Shared>,
    Path(user): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> ApiResult<HomePage> {
    let user = parse_user(&user)?;
    let (view, limit) = view_and_limit(&params)?;
    blocking(move || {
        let graph = state.graph.read();
        let follows = state.follows.lock().unwrap_or_else(|p| p.into_inner());
        Ok(Json(feed::homepage(
            &graph,
            &state.events,
            &follows,
            &state.indices.expert,
            &user,
            view,
            limit,
        )?))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ClickRequest {
    request_id: u64,
    doc_id: String,
}

async fn click_handler(State(state): State<Shared>, body: Bytes) -> ApiResult<Value> {
    let started = Instant::now();
    let req: ClickRequest = decode(&body)?;
    let search = state
        .searches
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .get(&req.request_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown request id {}", req.request_id)))?;
    if !search.results.contains(&req.doc_id) {
        return Err(ApiError::invalid(format!(
            "{} was not among the results of request {}",
            req.doc_id, req.request_id
        )));
    }
    let logged = state.telemetry.log(TelemetryRecord {
        kind: RecordKind::Click,
        request_id: req.request_id,
        query: search.query,
        user: search.user,
        results: search.results,
        clicked: Some(req.doc_id.clone()),
        response_time_ms: started.elapsed().as_secs_f64() * 1000.0,
        timestamp: Utc::now(),
    });
    Ok(Json(json!({
        "request_id": req.request_id,
        "doc_id": req.doc_id,
        "logged": logged,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_ids_accept_both_forms() {
        assert_eq!(parse_user("alice").unwrap(), NodeId::user("alice"));
        assert_eq!(parse_user("user:alice").unwrap(), NodeId::user("alice"));
        assert!(parse_user("repository:core").is_err());
        assert!(parse_user("  ").is_err());
    }

    #[test]
    fn feed_params_are_validated() {
        let p = |pairs: &[(&str, &str)]| -> HashMap<String, String> {
            pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect()
        };
        assert_eq!(
            view_and_limit(&p(&[])).unwrap(),
            (FeedView::MostRecent, DEFAULT_FEED_LIMIT)
        );
        assert_eq!(
            view_and_limit(&p(&[("view", "team_only"), ("limit", "5")])).unwrap(),
            (FeedView::TeamOnly, 5)
        );
        assert!(view_and_limit(&p(&[("view", "popular")])).is_err());
        assert!(view_and_limit(&p(&[("limit", "0")])).is_err());
        assert!(view_and_limit(&p(&[("limit", "ten")])).is_err());
    }
}
