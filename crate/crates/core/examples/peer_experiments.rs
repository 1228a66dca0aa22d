//! Peer-vote finetuning: random peers from the test set, then synthetic
//! votes from the most similar users agreeing with or opposing the target.

use cura::dataset::{index_posts, split_dataset, synth_generate, SplitMode, SynthConfig};
use cura::eval::{
    peer_vote_experiment, sample_targets, similar_peer_experiment, votes_to_reach, PeerMode, SimilarityIndex, WeightStats,
};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    // Held-out posts, so the model has never seen votes on the targets.
    let split = split_dataset(&corpus.votes, 0.8, SplitMode::ByPost, 0)?;
    let (model, _) = train(&split.train, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let stats = WeightStats::from_votes(&split.train);
    let sample = sample_targets(&split.test, 40, 1);
    let random = peer_vote_experiment(&model, &posts, &stats, &sample, 10)?;
    for p in &random.curve.points {
        println!("random k={:>2}: accuracy {:.3}", p.label, p.accuracy.unwrap_or(f64::NAN));
    }

    let similarity = SimilarityIndex::new(&split.train);
    for mode in [PeerMode::Support, PeerMode::Adversarial] {
        let r = similar_peer_experiment(&model, &posts, &stats, &similarity, &sample, 20, mode)?;
        println!("{mode:?}: accuracy {:.3} -> {:.3}", r.accuracy_at(0).unwrap_or(0.0), r.accuracy_at(20).unwrap_or(0.0));
        if mode == PeerMode::Support {
            let level = random.accuracy_at(10).unwrap_or(1.0);
            println!("  reaches the random k=10 level after {:?} votes", votes_to_reach(&r, level));
        }
    }
    Ok(())
}
