//! Train/test splits by vote and by post, and the class-balanced test set.

use std::collections::{BTreeMap, HashSet};

use cura::dataset::{build_balanced_test, split_dataset, synth_generate, SplitMode, SynthConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 20, posts: 80, votes_per_user: 30, ..SynthConfig::default() })?;

    for mode in [SplitMode::ByVote, SplitMode::ByPost] {
        let split = split_dataset(&corpus.votes, 0.8, mode, 3)?;
        let train_posts: HashSet<&str> = split.train.iter().map(|v| v.post_id.as_str()).collect();
        let shared = split.test.iter().filter(|v| train_posts.contains(v.post_id.as_str())).count();
        println!(
            "{mode:?}: train {} test {} (fraction {:.3}), test votes on training posts {shared}",
            split.train.len(),
            split.test.len(),
            split.train_fraction()
        );
    }

    let split = split_dataset(&corpus.votes, 0.8, SplitMode::ByVote, 3)?;
    let balanced = build_balanced_test(&split.test, 3);
    let mut per_community: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for v in &balanced {
        let e = per_community.entry(&v.community).or_default();
        if v.direction.is_up() { e.0 += 1 } else { e.1 += 1 }
    }
    for (c, (up, down)) in per_community {
        println!("{c}: {up} up, {down} down");
    }
    Ok(())
}
