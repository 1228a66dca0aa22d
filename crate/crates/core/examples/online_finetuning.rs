//! One online step: a new vote nudges the prediction for that user and post.

use cura::dataset::{compute_stats, index_posts, synth_generate, Direction, SynthConfig, VoteRecord};
use cura::model::{online_weight, train, Hyperparams, ModelConfig, OnlineModel, Predictor};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let (mut model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let post = &corpus.posts[0];
    let user = "user0000";
    let before = model.predict_at(user, post, 0.5);
    let direction = before.decision.opposite();
    let vote = VoteRecord::new(user, &post.post_id, direction, post.created_at, &post.community);

    let mut history = corpus.votes.clone();
    history.retain(|v| !(v.user_id == user && v.post_id == post.post_id));
    history.push(vote.clone());
    let (users, post_stats) = compute_stats(&history);
    let weight = online_weight(&vote, &users, &post_stats, model.hyperparams())?;

    for step in 1..=5 {
        model.finetune(&vote, post, weight);
        let p = model.predict_at(user, post, 0.5).p;
        println!("after step {step}: p(up) = {p:.4}");
    }
    println!("started at {:.4}, voted {}", before.p, if direction == Direction::Up { "up" } else { "down" });
    Ok(())
}
