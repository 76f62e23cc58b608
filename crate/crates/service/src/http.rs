//! JSON HTTP API over an [`Engine`].

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::engine::{Ack, Engine, FeedMode, FeedRequest, FeedResponse, InteractionRequest, Metrics, RebuildInfo};
use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedQuery {
    #[serde(alias = "user")]
    pub user_id: u32,
    pub k: Option<usize>,
    pub mode: Option<String>,
    #[serde(default)]
    pub recommended_only: bool,
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUser {
    pub profile: BTreeMap<String, String>,
    pub k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NewUserResponse {
    pub user_id: u32,
    pub feed: FeedResponse,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewPost {
    pub user_id: u32,
    /// Either a full distribution over categories or a map from category name to share.
    pub categories: CategoryInput,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum CategoryInput {
    Dense(Vec<f64>),
    Named(BTreeMap<String, f64>),
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NewPostResponse {
    pub post_id: u32,
    pub ack: Ack,
}

type AppState = Arc<Engine>;

pub fn router(engine: Arc<Engine>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/feed", get(feed))
        .route("/users", post(create_user))
        .route("/posts", post(create_post))
        .route("/interactions", post(interaction))
        .route("/admin/rebuild", post(rebuild))
        .route("/admin/metrics", get(metrics))
        .with_state(engine);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Binds and serves until the process is stopped.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(engine, static_dir)).await
}

async fn blocking<T, F>(engine: &AppState, f: F) -> ServiceResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> ServiceResult<T> + Send + 'static,
{
    let engine = Arc::clone(engine);
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn schedule_rebuild(engine: &AppState) {
    if engine.rebuild_due() {
        let engine = Arc::clone(engine);
        tokio::task::spawn_blocking(move || {
            if let Err(e) = engine.rebuild() {
                tracing::warn!(error = %e, "automatic rebuild failed; keeping previous snapshot");
            }
        });
    }
}

async fn feed(State(engine): State<AppState>, Query(q): Query<FeedQuery>) -> ServiceResult<Json<FeedResponse>> {
    let mode = match q.mode.as_deref() {
        Some(m) => m.parse()?,
        None => FeedMode::Hybrid,
    };
    let req = FeedRequest {
        user: q.user_id,
        k: q.k,
        mode,
        recommended_only: q.recommended_only,
        force: q.force,
    };
    Ok(Json(blocking(&engine, move |e| e.feed(&req)).await?))
}

async fn create_user(
    State(engine): State<AppState>,
    Json(body): Json<NewUser>,
) -> ServiceResult<Json<NewUserResponse>> {
    let (user_id, feed) = blocking(&engine, move |e| e.create_user(&body.profile, body.k)).await?;
    schedule_rebuild(&engine);
    Ok(Json(NewUserResponse { user_id, feed }))
}

async fn create_post(
    State(engine): State<AppState>,
    Json(body): Json<NewPost>,
) -> ServiceResult<Json<NewPostResponse>> {
    let (post_id, ack) = blocking(&engine, move |e| {
        let categories = match body.categories {
            CategoryInput::Dense(v) => v,
            CategoryInput::Named(map) => {
                let vocab = &e.snapshot().dataset.vocab;
                let mut v = vec![0.0; vocab.n_categories()];
                for (name, share) in map {
                    let j = vocab
                        .category_index(&name)
                        .ok_or_else(|| ServiceError::BadRequest(format!("unknown category `{name}`")))?;
                    v[j] = share;
                }
                v
            }
        };
        e.create_post(body.user_id, categories)
    })
    .await?;
    schedule_rebuild(&engine);
    Ok(Json(NewPostResponse { post_id, ack }))
}

async fn interaction(State(engine): State<AppState>, Json(body): Json<InteractionRequest>) -> ServiceResult<Json<Ack>> {
    let ack = blocking(&engine, move |e| e.post_interaction(&body)).await?;
    schedule_rebuild(&engine);
    Ok(Json(ack))
}

async fn rebuild(State(engine): State<AppState>) -> ServiceResult<Json<RebuildInfo>> {
    Ok(Json(blocking(&engine, |e| e.rebuild()).await?))
}

async fn metrics(State(engine): State<AppState>) -> ServiceResult<Json<Metrics>> {
    Ok(Json(blocking(&engine, |e| e.metrics()).await?))
}
