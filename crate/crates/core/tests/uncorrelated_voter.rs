mod common;

use std::collections::BTreeSet;

use common::at;
use cura::dataset::{index_posts, synth_generate, Direction, SynthConfig, VoteRecord};
use cura::feed::FeedEngine;
use cura::model::{train, Hyperparams, ModelConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Votes from members whose history is coin flips should leave curated
/// stages unchanged on average.
#[test]
fn uncorrelated_votes_do_not_move_stages_on_average() {
    let config = SynthConfig {
        users_per_group: 30,
        posts: 120,
        votes_per_user: 40,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let drifters: Vec<String> = (0..10).map(|i| format!("drifter{i}")).collect();
    let mut votes = corpus.votes.clone();
    for d in &drifters {
        for p in corpus.posts.choose_multiple(&mut rng, 40) {
            votes.push(VoteRecord::new(d, &p.post_id, Direction::from_up(rng.random_bool(0.5)), p.created_at, &p.community));
        }
    }
    let posts = index_posts(corpus.posts.clone());
    let hp = Hyperparams { epochs: 10, ..Hyperparams::desk() };
    let (model, _) = train(&votes, &posts, ModelConfig::desk(), hp).unwrap();

    let community = corpus.posts[0].community.clone();
    let mut engine = FeedEngine::new(model, corpus.posts.clone(), votes);
    let curators: BTreeSet<String> = corpus
        .labels
        .group_members(0)
        .into_iter()
        .filter(|u| engine.user_stats().in_community(u, &community).total() >= 5)
        .take(10)
        .collect();
    assert!(curators.len() >= 5);
    engine.set_curators(&community, curators, at(0)).unwrap();

    let targets: Vec<String> = engine.posts_in(&community).map(|p| p.record.post_id.clone()).collect();
    let (mut deltas, mut flips) = (Vec::new(), 0);
    for (i, post_id) in targets.iter().cycle().take(150).enumerate() {
        let state = engine.post(post_id).unwrap();
        let Some(voter) = drifters.iter().find(|d| !state.votes.contains_key(*d)) else {
            continue;
        };
        let (before, _, stage) = engine.evaluate(post_id).unwrap().unwrap();
        let direction = Direction::from_up(rng.random_bool(0.5));
        let vote = VoteRecord::new(voter, post_id, direction, at(10 + i as i64), &community);
        let after = engine.on_new_vote(vote).unwrap().status.unwrap();
        deltas.push(after.curator_upvote_rate - before);
        flips += usize::from(after.stage != stage);
    }

    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    assert!(n >= 100.0);
    assert!(se == 0.0 && mean == 0.0 || (mean / se).abs() < 3.0, "mean rate change {mean:.4} (se {se:.4})");
    assert!(flips as f64 / n <= 0.1, "{flips} of {n} stages flipped");
}
