//! Frontstage sets for one curator group as the curation threshold rises.

use cura::dataset::{index_posts, synth_generate, SynthConfig};
use cura::eval::{actual_votes, threshold_sweep};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let inventory: Vec<_> = corpus.posts.iter().filter(|p| p.community == "synth1").collect();
    let curators = corpus.labels.group_members(0).into_iter().take(10).collect();
    let report = threshold_sweep(&model, &inventory, &actual_votes(&corpus.votes), &curators, 0.5, &[0.2, 0.4, 0.6, 0.8])?;
    for level in &report.levels {
        println!("threshold {:.1}: {:>3} of {} posts frontstage", level.threshold, level.size(), inventory.len());
    }
    Ok(())
}
