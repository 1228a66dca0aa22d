//! Load a vote/post corpus from CSV, collapsing repeated votes.
//!
//! `cargo run --example ingest_corpus -- votes.csv posts.csv`; without
//! arguments a small corpus is written to a temp dir first.

use std::env;
use std::path::PathBuf;

use cura::dataset::{compute_stats, load_corpus, synth_generate, write_posts, write_votes, SynthConfig};

fn main() -> cura::Result<()> {
    let args: Vec<PathBuf> = env::args_os().skip(1).map(PathBuf::from).collect();
    let (votes, posts) = match args.as_slice() {
        [v, p] => (v.clone(), p.clone()),
        _ => {
            let dir = env::temp_dir().join("cura-ingest-example");
            std::fs::create_dir_all(&dir).map_err(|e| cura::Error::Io { path: dir.clone(), source: e })?;
            let corpus = synth_generate(&SynthConfig { users_per_group: 10, posts: 30, votes_per_user: 12, ..SynthConfig::default() })?;
            let mut votes = corpus.votes.clone();
            // A changed vote: the later record wins.
            let mut changed = votes[0].clone();
            changed.direction = changed.direction.opposite();
            changed.voted_at += chrono::Duration::hours(1);
            votes.push(changed);
            write_votes(dir.join("votes.csv"), &votes)?;
            write_posts(dir.join("posts.csv"), &corpus.posts)?;
            (dir.join("votes.csv"), dir.join("posts.csv"))
        }
    };

    let (votes, posts, report) = load_corpus(&votes, &posts)?;
    println!(
        "read {} votes and {} posts; {} duplicates collapsed, {} orphan votes",
        report.votes_read,
        report.posts_read,
        report.duplicates_collapsed,
        report.orphan_count()
    );
    let (users, post_stats) = compute_stats(&votes);
    let (user, _) = users.users().next().expect("at least one voter");
    println!("{user}: {} up, {} down", users.count(user, cura::dataset::Direction::Up), users.count(user, cura::dataset::Direction::Down));
    println!("{} posts with votes, {} posts with metadata", post_stats.len(), posts.len());
    Ok(())
}
