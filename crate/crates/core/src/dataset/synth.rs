//! Synthetic corpora with planted taste groups.
//!
//! Every user belongs to one latent group. Posts belong to a topic, each
//! group has a preferred direction per topic, and a fraction of posts invert
//! their topic's preferences. A vote equals the voter's group preference
//! with probability `1 - noise`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Direction, PostRecord, VoteRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub groups: usize,
    pub users_per_group: usize,
    pub posts: usize,
    pub votes_per_user: usize,
    /// Probability a vote deviates from the voter's group preference.
    pub noise: f64,
    pub seed: u64,
    pub topics: usize,
    pub words_per_topic: usize,
    /// Topic words per post text (a unique headline word is added).
    pub text_words: usize,
    pub communities: usize,
    /// Probability a topic is upvoted by a group.
    pub up_bias: f64,
    /// Probability a post inverts its topic's preferences for every group.
    pub post_flip: f64,
    /// With two groups, make the second group's preferences the exact
    /// negation of the first's.
    pub opposing: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            groups: 2,
            users_per_group: 100,
            posts: 500,
            votes_per_user: 100,
            noise: 0.1,
            seed: 17,
            topics: 12,
            words_per_topic: 6,
            text_words: 6,
            communities: 3,
            up_bias: 0.6,
            post_flip: 0.25,
            opposing: true,
        }
    }
}

impl SynthConfig {
    /// Reads a TOML key/value file; omitted keys take their defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&raw)
    }

    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::InvalidArgument(format!("synthetic config: {e}")))
    }

    pub fn users(&self) -> usize {
        self.groups * self.users_per_group
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.users_per_group == 0 || self.posts == 0 || self.topics == 0 {
            return Err(Error::InvalidArgument(
                "synthetic corpus needs at least one group, user, post and topic".into(),
            ));
        }
        if self.votes_per_user == 0 || self.votes_per_user > self.posts {
            return Err(Error::InvalidArgument(format!(
                "votes_per_user must be in 1..={}, got {}",
                self.posts, self.votes_per_user
            )));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::InvalidArgument(format!("noise must be in [0, 0.5), got {}", self.noise)));
        }
        for (name, p) in [("up_bias", self.up_bias), ("post_flip", self.post_flip)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.communities == 0 || self.words_per_topic == 0 {
            return Err(Error::InvalidArgument("communities and words_per_topic must be positive".into()));
        }
        Ok(())
    }
}

/// Ground truth behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedLabels {
    pub user_group: BTreeMap<String, usize>,
    /// Per post, the preferred direction of each group (indexed by group).
    pub post_preference: BTreeMap<String, Vec<Direction>>,
    pub post_topic: BTreeMap<String, usize>,
}

impl PlantedLabels {
    pub fn preference(&self, user: &str, post: &str) -> Option<Direction> {
        let g = *self.user_group.get(user)?;
        self.post_preference.get(post).map(|p| p[g])
    }

    pub fn group_members(&self, group: usize) -> Vec<String> {
        self.user_group
            .iter()
            .filter(|(_, &g)| g == group)
            .map(|(u, _)| u.clone())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub votes: Vec<VoteRecord>,
    pub posts: Vec<PostRecord>,
    pub labels: PlantedLabels,
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const DOMAINS: [&str; 6] = [
    "www.example.com",
    "news.example.org",
    "i.imgur.com",
    "www.youtube.com",
    "www.washingtonpost.com",
    "arxiv.org",
];

/// A pronounceable word unique to `n`.
fn pseudo_word(mut n: usize) -> String {
    let base = ONSETS.len() * VOWELS.len();
    let mut word = String::new();
    loop {
        let syl = n % base;
        word.push_str(ONSETS[syl / VOWELS.len()]);
        word.push_str(VOWELS[syl % VOWELS.len()]);
        n /= base;
        if n == 0 {
            break;
        }
        n -= 1;
    }
    word
}

pub fn user_name(index: usize) -> String {
    format!("user{index:04}")
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_users = config.users();

    // Topic preferences per group.
    let mut by_topic: Vec<Vec<Direction>> = Vec::with_capacity(config.topics);
    for _ in 0..config.topics {
        let mut row: Vec<Direction> = Vec::with_capacity(config.groups);
        for g in 0..config.groups {
            row.push(if config.opposing && config.groups == 2 && g == 1 {
                row[0].opposite()
            } else {
                Direction::from_up(rng.random_bool(config.up_bias))
            });
        }
        by_topic.push(row);
    }
    let topic_pref: Vec<Vec<Direction>> =
        (0..config.groups).map(|g| by_topic.iter().map(|row| row[g]).collect()).collect();

    let topic_words: Vec<Vec<String>> = (0..config.topics)
        .map(|t| {
            (0..config.words_per_topic)
                .map(|w| pseudo_word(t * config.words_per_topic + w))
                .collect()
        })
        .collect();
    let headline_offset = config.topics * config.words_per_topic + 1_000;

    let start = Utc.with_ymd_and_hms(2023, 1, 2, 8, 0, 0).unwrap();
    let mut posts = Vec::with_capacity(config.posts);
    let mut labels = PlantedLabels {
        user_group: (0..n_users).map(|u| (user_name(u), u % config.groups)).collect(),
        post_preference: BTreeMap::new(),
        post_topic: BTreeMap::new(),
    };
    for i in 0..config.posts {
        let topic = rng.random_range(0..config.topics);
        let flipped = rng.random_bool(config.post_flip);
        let prefs: Vec<Direction> = (0..config.groups)
            .map(|g| {
                let d = topic_pref[g][topic];
                if flipped {
                    d.opposite()
                } else {
                    d
                }
            })
            .collect();

        let mut words = vec![pseudo_word(headline_offset + i)];
        for _ in 0..config.text_words {
            let w = &topic_words[topic][rng.random_range(0..config.words_per_topic)];
            words.push(w.clone());
        }
        let post_id = format!("post{i:05}");
        let created_at = start + Duration::minutes(i as i64 * 37 + rng.random_range(0..30));
        let url_domain = if rng.random_bool(0.5) {
            DOMAINS[rng.random_range(0..DOMAINS.len())].to_string()
        } else {
            String::new()
        };
        posts.push(PostRecord {
            post_id: post_id.clone(),
            author_id: user_name(rng.random_range(0..n_users)),
            community: format!("synth{}", topic % config.communities),
            created_at,
            nsfw: rng.random_bool(0.05),
            url_domain,
            text: words.join(" "),
        });
        labels.post_preference.insert(post_id.clone(), prefs);
        labels.post_topic.insert(post_id, topic);
    }

    let mut votes = Vec::with_capacity(n_users * config.votes_per_user);
    for u in 0..n_users {
        let user = user_name(u);
        let group = u % config.groups;
        for p in index::sample(&mut rng, config.posts, config.votes_per_user) {
            let post = &posts[p];
            let preferred = labels.post_preference[&post.post_id][group];
            let direction = if config.noise > 0.0 && rng.random_bool(config.noise) {
                preferred.opposite()
            } else {
                preferred
            };
            let voted_at = post.created_at + Duration::minutes(rng.random_range(1..=1440));
            votes.push(VoteRecord::new(
                user.clone(),
                post.post_id.clone(),
                direction,
                voted_at,
                post.community.clone(),
            ));
        }
    }
    votes.sort_by(|a, b| a.voted_at.cmp(&b.voted_at).then_with(|| a.user_id.cmp(&b.user_id)));

    Ok(SynthCorpus { votes, posts, labels })
}
