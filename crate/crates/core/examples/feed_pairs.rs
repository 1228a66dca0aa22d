//! The fifteen target/distractor feed pairs from the user study, and one
//! rendered pair.

use cura::dataset::{synth_generate, SynthConfig};
use cura::eval::{render_feed, study_feed_pairs, FeedPairSettings, FeedSpec};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let pairs = study_feed_pairs();
    for pair in &pairs.pairs {
        println!(
            "{:>2}: {:?} curated by {:?} vs {:?} curated by {:?}",
            pair.id, pair.target.communities, pair.target.curated_by, pair.distractor.communities, pair.distractor.curated_by
        );
    }

    // The same rendering on synthetic communities.
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let index = cura::dataset::index_posts(corpus.posts.clone());
    let (model, _) = train(&corpus.votes, &index, ModelConfig::desk(), Hyperparams::desk())?;
    let settings = FeedPairSettings { min_curator_votes: 3, min_curator_up_rate: 0.5, ..FeedPairSettings::default() };
    let target = FeedSpec::curated(&["synth0"], "synth1");
    let feed = render_feed(&target, &settings, &model, &corpus.posts, &corpus.votes, 0)?;
    println!("synth0 curated by synth1 members: {} curators, {} of {} posts shown", feed.curators, feed.entries.len(), feed.inventory);
    Ok(())
}
