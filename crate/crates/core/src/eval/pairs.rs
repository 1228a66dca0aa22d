//! The fifteen target/distractor feed pairs of the feed-identification
//! study, as data, plus a renderer that builds either feed from a corpus.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::divergence::{actual_votes, select_curator_group};
use crate::dataset::{PostRecord, VoteRecord};
use crate::error::{Error, Result};
use crate::feed::{broadcast_feed, curator_upvote_rate, rank_feed, route_post, FeedEntry, Stage};
use crate::model::Predictor;

/// A feed over the posts of one or more communities, either ranked by net
/// votes (`curated_by` absent) or curated by members of another community.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedSpec {
    pub communities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curated_by: Option<String>,
}

impl FeedSpec {
    pub fn broadcast(community: &str) -> Self {
        Self {
            communities: vec![community.into()],
            curated_by: None,
        }
    }

    pub fn curated(communities: &[&str], by: &str) -> Self {
        Self {
            communities: communities.iter().map(|c| c.to_string()).collect(),
            curated_by: Some(by.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedPair {
    pub id: usize,
    pub target: FeedSpec,
    pub distractor: FeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedPairSettings {
    /// Posts sampled from each community before ranking.
    pub posts_per_community: usize,
    pub feed_limit: usize,
    pub curation_threshold: f64,
    pub confidence_threshold: f64,
    pub min_curator_votes: u64,
    pub min_curator_up_rate: f64,
}

impl Default for FeedPairSettings {
    fn default() -> Self {
        Self {
            posts_per_community: 500,
            feed_limit: 15,
            curation_threshold: 0.5,
            confidence_threshold: 0.5,
            min_curator_votes: 5,
            min_curator_up_rate: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedPairConfig {
    pub settings: FeedPairSettings,
    pub pairs: Vec<FeedPair>,
}

const POLITICS: [&str; 6] = ["politics", "Conservative", "Liberal", "Republican", "democrats", "PoliticalDiscussion"];
const SCIENCE: [&str; 4] = ["science", "ScienceFacts", "technology", "shittyaskscience"];

pub fn study_feed_pairs() -> FeedPairConfig {
    use FeedSpec as F;
    let rows = [
        (F::curated(&["technology"], "programming"), F::broadcast("technology")),
        (F::curated(&["technology"], "teenagers"), F::curated(&["technology"], "Conservative")),
        (F::curated(&["PoliticalDiscussion"], "Conservative"), F::broadcast("PoliticalDiscussion")),
        (F::curated(&POLITICS, "democrats"), F::curated(&POLITICS, "Republican")),
        (F::curated(&["Jokes"], "LesbianActually"), F::broadcast("Jokes")),
        (F::curated(&["Jokes"], "teenagers"), F::broadcast("Jokes")),
        (F::curated(&["Jokes"], "Conservative"), F::broadcast("Jokes")),
        (F::curated(&["teenagers"], "gaming"), F::broadcast("teenagers")),
        (F::curated(&["teenagers"], "travel"), F::curated(&["teenagers"], "punk")),
        (F::curated(&["worldnews"], "Liberal"), F::broadcast("worldnews")),
        (F::curated(&["worldnews"], "india"), F::curated(&["worldnews"], "france")),
        (F::curated(&["gaming"], "teenagers"), F::broadcast("gaming")),
        (F::curated(&["gaming"], "LesbianActually"), F::curated(&["gaming"], "scifi")),
        (F::curated(&["Music"], "Christianity"), F::curated(&["Music"], "scifi")),
        (F::curated(&SCIENCE, "programming"), F::curated(&SCIENCE, "Jokes")),
    ];
    FeedPairConfig {
        settings: FeedPairSettings::default(),
        pairs: rows
            .into_iter()
            .enumerate()
            .map(|(i, (target, distractor))| FeedPair {
                id: i + 1,
                target,
                distractor,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenderedFeed {
    pub spec: FeedSpec,
    pub inventory: usize,
    pub curators: usize,
    pub entries: Vec<FeedEntry>,
}

/// Samples the inventory of `spec` from `posts` and ranks it.
///
/// Curators are users who voted in any inventory community and meet the
/// activity and upvote-rate bar in `curated_by`. Curated feeds keep only
/// frontstage posts.
pub fn render_feed<P: Predictor + ?Sized>(
    spec: &FeedSpec,
    settings: &FeedPairSettings,
    model: &P,
    posts: &[PostRecord],
    votes: &[VoteRecord],
    seed: u64,
) -> Result<RenderedFeed> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inventory: Vec<&PostRecord> = Vec::new();
    for community in &spec.communities {
        let mut pool: Vec<&PostRecord> = posts.iter().filter(|p| &p.community == community).collect();
        pool.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        let n = settings.posts_per_community.min(pool.len());
        inventory.extend(index::sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i]));
    }
    let ids: BTreeSet<&str> = inventory.iter().map(|p| p.post_id.as_str()).collect();
    let Some(affinity) = &spec.curated_by else {
        let entries = broadcast_feed(
            inventory.iter().copied(),
            votes.iter().filter(|v| ids.contains(v.post_id.as_str())),
            Some(settings.feed_limit),
        );
        return Ok(RenderedFeed {
            spec: spec.clone(),
            inventory: inventory.len(),
            curators: 0,
            entries,
        });
    };
    let mut curators = BTreeSet::new();
    for source in &spec.communities {
        curators.extend(select_curator_group(
            votes,
            source,
            affinity,
            settings.min_curator_votes,
            settings.min_curator_up_rate,
        ));
    }
    if curators.is_empty() {
        return Err(Error::Empty("no users qualify as curators for this feed"));
    }
    let actual: HashMap<(String, String), _> = actual_votes(votes.iter().filter(|v| ids.contains(v.post_id.as_str())));
    let mut entries = Vec::new();
    for post in &inventory {
        let (rate, _) = curator_upvote_rate(
            post,
            |u| actual.get(&(u.to_string(), post.post_id.clone())).copied(),
            model,
            &curators,
            settings.confidence_threshold,
        )?;
        if route_post(rate, settings.curation_threshold) == Stage::Frontstage {
            entries.push(FeedEntry {
                post_id: post.post_id.clone(),
                score: rate,
                created_at: post.created_at,
                stage: Some(Stage::Frontstage),
            });
        }
    }
    Ok(RenderedFeed {
        spec: spec.clone(),
        inventory: inventory.len(),
        curators: curators.len(),
        entries: rank_feed(entries, Some(settings.feed_limit)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_pairs_round_trip_through_toml() {
        let config = study_feed_pairs();
        assert_eq!(config.pairs.len(), 15);
        assert_eq!(config.pairs[3].target.communities.len(), 6);
        assert_eq!(config.pairs[14].distractor.curated_by.as_deref(), Some("Jokes"));
        let broadcasts = config.pairs.iter().filter(|p| p.distractor.curated_by.is_none()).count();
        assert_eq!(broadcasts, 8);
        let text = toml::to_string(&config).unwrap();
        let back: FeedPairConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }
}
