use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::RecommendedGroup;
use super::members::{list_members, KarmaRecord, MemberPage, MemberQuery};
use crate::dataset::{Direction, PostRecord, VoteRecord};
use crate::error::Error;
use crate::feed::{
    CommunityConfig, FeedEngine, FeedEntry, Inventory, PostStatus, PreviewRequest, PreviewResult, Stage, VoteOutcome,
    DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_CURATION_THRESHOLD,
};

/// JSON Schema for every `/v1` request and response body.
pub const API_SCHEMA: &str = include_str!("../../api/v1.schema.json");

pub struct AppState {
    engine: RwLock<FeedEngine>,
    token: String,
    karma: HashMap<String, KarmaRecord>,
    recommended: Vec<RecommendedGroup>,
}

impl AppState {
    pub fn new(engine: FeedEngine, token: impl Into<String>) -> Self {
        Self {
            engine: RwLock::new(engine),
            token: token.into(),
            karma: HashMap::new(),
            recommended: Vec::new(),
        }
    }

    pub fn with_karma(mut self, karma: HashMap<String, KarmaRecord>) -> Self {
        self.karma = karma;
        self
    }

    pub fn with_recommended(mut self, groups: Vec<RecommendedGroup>) -> Self {
        self.recommended = groups;
        self
    }

    pub fn engine(&self) -> &RwLock<FeedEngine> {
        &self.engine
    }
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(Error::InvalidArgument(e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(Error::InvalidArgument(e.body_text()))
    }
}

fn error_body(status: StatusCode, kind: &str, message: String, users: Vec<String>) -> Response {
    let body = json!({ "error": { "kind": kind, "message": message, "users": users } });
    (status, Json(body)).into_response()
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.0.to_string();
        let (status, kind, users) = match self.0 {
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", Vec::new()),
            Error::AlreadyExists(_) => (StatusCode::CONFLICT, "conflict", Vec::new()),
            Error::Validation { users, .. } => (StatusCode::UNPROCESSABLE_ENTITY, "validation", users),
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "bad_request", Vec::new()),
            _ => {
                tracing::error!(error = %message, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", Vec::new())
            }
        };
        error_body(status, kind, message, users)
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs engine work off the async workers; finetuning and re-routing a
/// whole community can take a while.
async fn blocking<T: Send + 'static>(
    state: &Arc<AppState>,
    f: impl FnOnce(&AppState) -> crate::Result<T> + Send + 'static,
) -> ApiResult<T> {
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError(Error::Store(format!("worker failed: {e}"))))?
        .map(Json)
        .map_err(ApiError)
}

fn tokens_match(given: &[u8], expected: &[u8]) -> bool {
    given.len() == expected.len() && given.iter().zip(expected).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let given = request
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match given {
        Some(t) if tokens_match(t.as_bytes(), state.token.as_bytes()) => next.run(request).await,
        _ => error_body(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or invalid bearer token".into(),
            Vec::new(),
        ),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let protected = Router::new()
        .route("/v1/communities/{c}/members", get(members))
        .route("/v1/communities/{c}/config", get(config))
        .route("/v1/communities/{c}/curators", put(set_curators))
        .route("/v1/communities/{c}/thresholds", put(set_thresholds))
        .route("/v1/communities/{c}/preview", post(preview))
        .route("/v1/communities/{c}/feed", get(feed))
        .route("/v1/communities/{c}/broadcast", get(broadcast))
        .route("/v1/communities/{c}/recommended-curators", get(recommended))
        .route("/v1/posts", post(submit))
        .route("/v1/posts/{id}/votes", post(vote))
        .route("/v1/posts/{id}/status", get(status))
        .route("/v1/state", get(state_info))
        .route_layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
    Router::new()
        .route("/v1/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .route("/v1/schema", get(schema))
        .merge(protected)
        .with_state(state)
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], API_SCHEMA).into_response()
}

async fn members(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    query: Result<Query<MemberQuery>, QueryRejection>,
) -> ApiResult<MemberPage> {
    let Query(query) = query?;
    blocking(&state, move |s| {
        let engine = s.engine.read();
        if !engine.has_community(&community) {
            return Err(Error::NotFound(format!("community {community}")));
        }
        list_members(engine.user_stats(), &s.karma, &community, query)
    })
    .await
}

async fn config(State(state): State<Arc<AppState>>, Path(community): Path<String>) -> ApiResult<CommunityConfig> {
    blocking(&state, move |s| {
        s.engine
            .read()
            .config(&community)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("curation config for {community}")))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CuratorsBody {
    curators: BTreeSet<String>,
}

async fn set_curators(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    body: Result<Json<CuratorsBody>, JsonRejection>,
) -> ApiResult<CommunityConfig> {
    let Json(body) = body?;
    blocking(&state, move |s| s.engine.write().set_curators(&community, body.curators, Utc::now())).await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdsBody {
    curation_threshold: f64,
    confidence_threshold: f64,
}

async fn set_thresholds(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    body: Result<Json<ThresholdsBody>, JsonRejection>,
) -> ApiResult<CommunityConfig> {
    let Json(body) = body?;
    blocking(&state, move |s| {
        s.engine
            .write()
            .set_thresholds(&community, body.curation_threshold, body.confidence_threshold, Utc::now())
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewBody {
    curators: BTreeSet<String>,
    curation_threshold: Option<f64>,
    confidence_threshold: Option<f64>,
    #[serde(default)]
    inventory: Option<Inventory>,
}

async fn preview(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    body: Result<Json<PreviewBody>, JsonRejection>,
) -> ApiResult<PreviewResult> {
    let Json(body) = body?;
    blocking(&state, move |s| {
        let engine = s.engine.read();
        let current = engine.config(&community);
        let request = PreviewRequest {
            curators: body.curators,
            curation_threshold: body
                .curation_threshold
                .or(current.map(|c| c.curation_threshold))
                .unwrap_or(DEFAULT_CURATION_THRESHOLD),
            confidence_threshold: body
                .confidence_threshold
                .or(current.map(|c| c.confidence_threshold))
                .unwrap_or(DEFAULT_CONFIDENCE_THRESHOLD),
            inventory: body.inventory.unwrap_or(Inventory::All),
            community,
        };
        engine.preview(&request)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedQuery {
    stage: Option<String>,
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct FeedResponse {
    community: String,
    stage: Option<Stage>,
    entries: Vec<FeedEntry>,
}

async fn feed(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    query: Result<Query<FeedQuery>, QueryRejection>,
) -> ApiResult<FeedResponse> {
    let Query(query) = query?;
    let stage = query.stage.as_deref().filter(|s| !s.is_empty()).map(str::parse::<Stage>).transpose()?;
    blocking(&state, move |s| {
        let entries = s.engine.read().generate_feed(&community, stage, query.limit)?;
        Ok(FeedResponse { community, stage, entries })
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitQuery {
    limit: Option<usize>,
}

async fn broadcast(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
    query: Result<Query<LimitQuery>, QueryRejection>,
) -> ApiResult<FeedResponse> {
    let Query(query) = query?;
    blocking(&state, move |s| {
        let entries = s.engine.read().broadcast_feed(&community, query.limit)?;
        Ok(FeedResponse {
            community,
            stage: None,
            entries,
        })
    })
    .await
}

#[derive(Debug, Serialize)]
struct RecommendedResponse {
    community: String,
    groups: Vec<RecommendedGroup>,
}

async fn recommended(
    State(state): State<Arc<AppState>>,
    Path(community): Path<String>,
) -> ApiResult<RecommendedResponse> {
    blocking(&state, move |s| {
        if !s.engine.read().has_community(&community) {
            return Err(Error::NotFound(format!("community {community}")));
        }
        let groups = s.recommended.iter().filter(|g| g.community == community).cloned().collect();
        Ok(RecommendedResponse { community, groups })
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    post_id: String,
    author_id: String,
    community: String,
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    nsfw: bool,
    #[serde(default)]
    url_domain: String,
    text: String,
}

#[derive(Debug, Serialize)]
struct SubmitResponse {
    post_id: String,
    status: Option<PostStatus>,
}

async fn submit(
    State(state): State<Arc<AppState>>,
    body: Result<Json<SubmitBody>, JsonRejection>,
) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let Json(b) = body?;
    let post = PostRecord {
        post_id: b.post_id,
        author_id: b.author_id,
        community: b.community,
        created_at: b.created_at.unwrap_or_else(Utc::now),
        nsfw: b.nsfw,
        url_domain: b.url_domain,
        text: b.text,
    };
    let id = post.post_id.clone();
    let Json(status) = blocking(&state, move |s| s.engine.write().on_submit(post)).await?;
    Ok((StatusCode::CREATED, Json(SubmitResponse { post_id: id, status })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoteBody {
    user_id: String,
    direction: Direction,
    voted_at: Option<DateTime<Utc>>,
}

async fn vote(
    State(state): State<Arc<AppState>>,
    Path(post_id): Path<String>,
    body: Result<Json<VoteBody>, JsonRejection>,
) -> ApiResult<VoteOutcome> {
    let Json(body) = body?;
    if body.user_id.is_empty() {
        return Err(ApiError(Error::validation("user_id must not be empty")));
    }
    blocking(&state, move |s| {
        let mut engine = s.engine.write();
        let community = engine
            .post(&post_id)
            .ok_or_else(|| Error::NotFound(format!("post {post_id}")))?
            .record
            .community
            .clone();
        let vote = VoteRecord::new(
            body.user_id,
            post_id,
            body.direction,
            body.voted_at.unwrap_or_else(Utc::now),
            community,
        );
        engine.on_new_vote(vote)
    })
    .await
}

async fn status(State(state): State<Arc<AppState>>, Path(post_id): Path<String>) -> ApiResult<PostStatus> {
    blocking(&state, move |s| {
        s.engine
            .read()
            .post_status(&post_id)?
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("status of post {post_id} (community has no curators)")))
    })
    .await
}

#[derive(Debug, Serialize)]
struct StateInfo {
    seq: u64,
    state_hash: String,
}

async fn state_info(State(state): State<Arc<AppState>>) -> ApiResult<StateInfo> {
    blocking(&state, |s| {
        let engine = s.engine.read();
        Ok(StateInfo {
            seq: engine.seq(),
            state_hash: engine.state_hash(),
        })
    })
    .await
}
