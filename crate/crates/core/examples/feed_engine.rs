//! Curate a community: choose curators, submit posts, take votes, read the
//! frontstage feed and preview other settings. Events are logged, so a
//! second engine over the same directory picks up where this one stopped.

use std::collections::BTreeSet;

use chrono::Utc;
use cura::dataset::{index_posts, synth_generate, Direction, PostRecord, SynthConfig, VoteRecord};
use cura::feed::{FeedEngine, Inventory, PreviewRequest, Stage};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let dir = std::env::temp_dir().join("cura-feed-example");
    let _ = std::fs::remove_dir_all(&dir);
    let mut engine = FeedEngine::open(model.clone(), corpus.posts.clone(), corpus.votes.clone(), &dir)?;

    let community = "synth0";
    let curators: BTreeSet<String> = corpus.labels.group_members(0).into_iter().take(7).collect();
    let config = engine.set_curators(community, curators.clone(), Utc::now())?;
    println!("curators v{}: {:?}", config.version, config.curators);

    let post = PostRecord {
        post_id: "fresh1".into(),
        author_id: "user0001".into(),
        created_at: Utc::now(),
        ..corpus.posts.iter().find(|p| p.community == community).unwrap().clone()
    };
    let status = engine.on_submit(post)?.expect("community is curated");
    println!("submitted: rate {:.2}, {:?}", status.curator_upvote_rate, status.stage);

    for user in curators.iter().take(3) {
        let vote = VoteRecord::new(user, "fresh1", Direction::Up, Utc::now(), community);
        let status = engine.on_new_vote(vote)?.status.unwrap();
        println!("{user} upvoted: rate {:.2}, {:?}", status.curator_upvote_rate, status.stage);
    }

    for entry in engine.generate_feed(community, Some(Stage::Frontstage), Some(5))? {
        println!("frontstage {} {:.2}", entry.post_id, entry.score);
    }

    let preview = engine.preview(&PreviewRequest {
        community: community.into(),
        curators: corpus.labels.group_members(1).into_iter().take(7).collect(),
        curation_threshold: 0.6,
        confidence_threshold: 0.5,
        inventory: Inventory::All,
    })?;
    println!("other curators at 0.6 would put {} of {} posts frontstage", preview.frontstage, preview.entries.len());

    let hash = engine.state_hash();
    drop(engine);
    let reopened = FeedEngine::open(model, corpus.posts, corpus.votes, &dir)?;
    println!("restored from log: {}", reopened.state_hash() == hash);
    Ok(())
}
