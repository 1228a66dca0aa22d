//! HTTP admin service over the feed engine.
//!
//! Everything under `/v1` except `/v1/health` and `/v1/schema` requires
//! `Authorization: Bearer <admin token>`.

mod api;
mod config;
mod members;

use std::sync::Arc;

pub use api::{router, ApiError, AppState, API_SCHEMA};
pub use config::{RecommendedGroup, ServiceConfig};
pub use members::{list_members, load_karma, read_karma, KarmaRecord, MemberPage, MemberProfile, MemberQuery};

use crate::dataset::load_corpus;
use crate::error::{Error, Result};
use crate::feed::FeedEngine;
use crate::model::ModelCheckpoint;

/// Loads the corpus, checkpoint and event logs named in `config`.
pub fn build_state(config: &ServiceConfig) -> Result<AppState> {
    let model = ModelCheckpoint::load(&config.checkpoint)?;
    let (votes, posts, report) = load_corpus(&config.votes, &config.posts)?;
    tracing::info!(
        votes = votes.len(),
        posts = posts.len(),
        duplicates = report.duplicates_collapsed,
        orphans = report.orphan_count(),
        "corpus loaded"
    );
    let engine = FeedEngine::open(model, posts.into_values(), votes, &config.state_dir)?;
    let karma = match &config.karma {
        Some(path) => load_karma(path)?,
        None => Default::default(),
    };
    Ok(AppState::new(engine, config.admin_token.clone())
        .with_karma(karma)
        .with_recommended(config.recommended.clone()))
}

/// Serves until interrupted, then writes a status snapshot.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let state = Arc::new(tokio::task::block_in_place(|| build_state(&config))?);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|e| Error::Store(format!("bind {}: {e}", config.listen)))?;
    tracing::info!(addr = %config.listen, "admin service listening");
    axum::serve(listener, router(Arc::clone(&state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Store(format!("server: {e}")))?;
    let engine = state.engine().read();
    engine.write_snapshot()
}
