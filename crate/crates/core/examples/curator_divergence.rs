//! How differently two curator groups would rate the same posts, and how a
//! curated feed ranks against the broadcast feed.

use cura::dataset::{compute_stats, index_posts, synth_generate, SynthConfig};
use cura::eval::{curator_group_divergence, random_group, CuratorGroup};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let community = "synth0";
    let inventory: Vec<_> = corpus.posts.iter().filter(|p| p.community == community).collect();
    let (stats, _) = compute_stats(&corpus.votes);
    let groups = vec![
        CuratorGroup::new("group0", corpus.labels.group_members(0)),
        CuratorGroup::new("group1", corpus.labels.group_members(1)),
        CuratorGroup::new("random1", random_group(&stats, community, 20, 1)),
        CuratorGroup::new("random2", random_group(&stats, community, 20, 2)),
    ];
    let report = curator_group_divergence(&model, &inventory, &groups, 0.5)?;
    for (name, row) in report.groups.iter().zip(&report.matrix) {
        let cells: Vec<String> = row.iter().map(|r| r.map_or("  n/a".into(), |r| format!("{r:+.2}"))).collect();
        println!("{name:>8} {}", cells.join(" "));
    }
    Ok(())
}
