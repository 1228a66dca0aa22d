//! Generate a two-group synthetic corpus and look at what was planted.

use cura::dataset::{compute_stats, synth_generate, SynthConfig};

fn main() -> cura::Result<()> {
    let config = SynthConfig {
        users_per_group: 20,
        posts: 60,
        votes_per_user: 30,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&config)?;
    let (users, posts) = compute_stats(&corpus.votes);
    println!("{} votes by {} users on {} posts", corpus.votes.len(), users.len(), posts.len());

    let p = &corpus.posts[0];
    println!("{} in {}: {:?}", p.post_id, p.community, p.text);
    println!("group preferences: {:?}", corpus.labels.post_preference[&p.post_id]);

    let agree = corpus
        .votes
        .iter()
        .filter(|v| corpus.labels.preference(&v.user_id, &v.post_id) == Some(v.direction))
        .count();
    println!("votes matching the voter's group: {:.3}", agree as f64 / corpus.votes.len() as f64);
    Ok(())
}
