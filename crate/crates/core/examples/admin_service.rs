//! Run the admin HTTP API over a small synthetic community.
//!
//! ```text
//! cargo run --example admin_service
//! curl -H 'authorization: Bearer demo' localhost:8080/v1/communities/synth0/members?per_page=5
//! ```

use std::sync::Arc;

use cura::admin::{router, AppState};
use cura::dataset::{index_posts, synth_generate, SynthConfig};
use cura::feed::FeedEngine;
use cura::model::{train, Hyperparams, ModelConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk())?;
    let engine = FeedEngine::new(model, corpus.posts, corpus.votes);
    let app = router(Arc::new(AppState::new(engine, "demo")));

    let addr = std::env::var("CURA_LISTEN").unwrap_or_else(|_| "127.0.0.1:8080".into());
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app).with_graceful_shutdown(async { tokio::signal::ctrl_c().await.ok(); }).await?;
    Ok(())
}
