mod common;

use std::collections::HashSet;

use common::{post, vote};
use cura::dataset::{compute_stats, index_posts, synth_generate, Direction, PostRecord, SynthConfig, VoteRecord};
use cura::model::{
    build_training_vocabulary, compute_weight, serialize_input, train, Hyperparams, ModelCheckpoint, ModelConfig,
    Predictor, TARGET_INDEX,
};
use proptest::prelude::*;

fn small_model(votes: &[VoteRecord], posts: &[PostRecord]) -> ModelCheckpoint {
    let config = ModelConfig::miniature();
    let vocab = build_training_vocabulary(votes, &index_posts(posts.to_vec()), &config);
    ModelCheckpoint::initialize(config, Hyperparams::desk(), vocab).unwrap()
}

fn fixture(users: usize, posts: usize) -> (Vec<VoteRecord>, Vec<PostRecord>) {
    let posts: Vec<PostRecord> = (0..posts)
        .map(|i| {
            let mut p = post(&format!("p{i}"), &format!("u{}", i % users), "garden", i as i64 * 3600);
            p.text = format!("headline{i} about soil and seeds");
            p
        })
        .collect();
    let votes = (0..users)
        .flat_map(|u| {
            posts
                .iter()
                .enumerate()
                .filter(move |(i, _)| (i + u) % 2 == 0)
                .map(move |(i, p)| vote(&format!("u{u}"), &p.post_id, (i + u) % 3 != 0, "garden", 0))
        })
        .collect();
    (votes, posts)
}

#[test]
fn serialization_is_injective_and_pins_the_target() {
    let (votes, posts) = fixture(6, 10);
    let model = small_model(&votes, &posts);
    let mut seen = HashSet::new();
    for u in (0..6).map(|u| format!("u{u}")).chain(["stranger".to_string()]) {
        for p in &posts {
            let ex = serialize_input(&u, p, model.vocab(), model.config().max_len);
            assert_eq!(ex.target_index, TARGET_INDEX);
            assert_eq!(ex.tokens[TARGET_INDEX], model.vocab().user_or_unknown(&u));
            assert_eq!(ex.truncated_tokens, 0);
            assert!(seen.insert(ex.tokens), "{u} on {} collides", p.post_id);
        }
    }
}

#[test]
fn finetuning_a_single_example_never_raises_its_loss() {
    let (votes, posts) = fixture(4, 6);
    let mut model = small_model(&votes, &posts);
    let vocab = model.vocab().clone();
    let v = &votes[0];
    let p = posts.iter().find(|p| p.post_id == v.post_id).unwrap();
    let ex = model.encode(&v.user_id, p);
    let mut last = model.loss(&ex, v.direction.label(), 1.0);
    for _ in 0..10 {
        model.finetune_step(v, p, 1.0, 1e-6);
        let now = model.loss(&ex, v.direction.label(), 1.0);
        assert!(now <= last, "loss rose from {last} to {now}");
        last = now;
    }
    assert_eq!(model.vocab(), &vocab);
}

#[test]
fn noiseless_groups_are_separated_after_training() {
    let config = SynthConfig {
        users_per_group: 30,
        posts: 120,
        votes_per_user: 40,
        noise: 0.0,
        post_flip: 0.0,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&config).unwrap();
    let posts = index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk()).unwrap();
    let groups = [corpus.labels.group_members(0), corpus.labels.group_members(1)];
    let mut gaps = Vec::new();
    for p in &corpus.posts {
        let prefs = &corpus.labels.post_preference[&p.post_id];
        if prefs[0] == prefs[1] {
            continue;
        }
        let mean = |g: &[String]| g.iter().map(|u| model.predict_at(u, p, 0.5).p).sum::<f64>() / g.len() as f64;
        let (up, down) = if prefs[0] == Direction::Up { (0, 1) } else { (1, 0) };
        gaps.push(mean(&groups[up]) - mean(&groups[down]));
    }
    let gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(!gaps.is_empty());
    assert!(gap >= 0.5, "mean separation {gap:.3} over {} disputed posts", gaps.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn downvote_weight_scales_matching_counts(n in 1usize..8, m in 1usize..8, w_down in 0.1f64..5.0) {
        // One user with n votes of each direction; the target post has m of each.
        let mut votes = Vec::new();
        for i in 0..n {
            votes.push(vote("u", &format!("x{i}"), true, "c", 0));
            votes.push(vote("u", &format!("y{i}"), false, "c", 0));
        }
        for j in 0..m {
            votes.push(vote(&format!("fan{j}"), "target", true, "c", 0));
            votes.push(vote(&format!("foe{j}"), "target", false, "c", 0));
        }
        let (users, post_stats) = compute_stats(&votes);
        let up = compute_weight(&vote("fan0", "target", true, "c", 0), &users, &post_stats, w_down).unwrap();
        let down = compute_weight(&vote("foe0", "target", false, "c", 0), &users, &post_stats, w_down).unwrap();
        prop_assert!((down / up - w_down).abs() < 1e-12);
    }

    #[test]
    fn predictions_are_probabilities(user in "[a-z]{1,6}", post_index in 0usize..6, threshold in 0.0f64..1.0) {
        let (votes, posts) = fixture(4, 6);
        let model = small_model(&votes, &posts);
        let p = &posts[post_index];
        let pred = model.predict_with_threshold(&user, p, threshold);
        prop_assert!(pred.p.is_finite() && (0.0..=1.0).contains(&pred.p));
        prop_assert_eq!(pred.decision == Direction::Up, pred.p >= threshold);
        prop_assert_eq!(model.predict_with_threshold(&user, p, pred.p).decision, Direction::Up);
    }
}
