//! Vote and post records, corpus ingestion, vote statistics and splits.
//!
//! A corpus is two delimited files: one row per vote and one row per post.
//! Votes are the atom of both training and runtime updates; posts carry the
//! metadata the model serializes.

mod io;
mod split;
mod stats;
pub mod synth;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use io::{load_corpus, load_posts, load_votes, write_posts, write_votes, LoadReport};
pub use split::{build_balanced_test, split_dataset, DatasetSplit, SplitMode};
pub use stats::{compute_stats, PostVoteStats, UserStats, VoteCounts};
pub use synth::{synth_generate, PlantedLabels, SynthConfig, SynthCorpus};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn is_up(self) -> bool {
        self == Direction::Up
    }

    /// +1 for an upvote, -1 for a downvote.
    pub fn sign(self) -> i8 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    /// Training label: 1.0 for up, 0.0 for down.
    pub fn label(self) -> f64 {
        if self.is_up() {
            1.0
        } else {
            0.0
        }
    }

    pub fn from_up(up: bool) -> Direction {
        if up {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "up" => Ok(Direction::Up),
            "down" => Ok(Direction::Down),
            other => Err(Error::InvalidArgument(format!(
                "vote direction must be `up` or `down`, got `{other}`"
            ))),
        }
    }
}

/// One vote event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub user_id: String,
    pub post_id: String,
    pub direction: Direction,
    pub voted_at: DateTime<Utc>,
    pub community: String,
}

impl VoteRecord {
    pub fn new(
        user_id: impl Into<String>,
        post_id: impl Into<String>,
        direction: Direction,
        voted_at: DateTime<Utc>,
        community: impl Into<String>,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            post_id: post_id.into(),
            direction,
            voted_at,
            community: community.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub author_id: String,
    pub community: String,
    pub created_at: DateTime<Utc>,
    pub nsfw: bool,
    /// Empty for non-link posts.
    pub url_domain: String,
    pub text: String,
}

/// Posts keyed by id.
pub type PostIndex = HashMap<String, PostRecord>;

pub fn index_posts(posts: impl IntoIterator<Item = PostRecord>) -> PostIndex {
    posts.into_iter().map(|p| (p.post_id.clone(), p)).collect()
}

/// Collapses repeated `(user, post)` votes to the latest one.
///
/// Ties on `voted_at` go to the record that appears later in the input.
/// The output keeps the position of each pair's first occurrence.
pub fn dedupe_latest(votes: Vec<VoteRecord>) -> (Vec<VoteRecord>, usize) {
    let mut slot: HashMap<(String, String), usize> = HashMap::with_capacity(votes.len());
    let mut out: Vec<VoteRecord> = Vec::with_capacity(votes.len());
    let mut collapsed = 0;
    for vote in votes {
        let key = (vote.user_id.clone(), vote.post_id.clone());
        match slot.get(&key) {
            Some(&i) => {
                collapsed += 1;
                if vote.voted_at >= out[i].voted_at {
                    out[i] = vote;
                }
            }
            None => {
                slot.insert(key, out.len());
                out.push(vote);
            }
        }
    }
    (out, collapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(min: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 11, 6, 12, min, 0).unwrap()
    }

    #[test]
    fn latest_vote_wins() {
        let votes = vec![
            VoteRecord::new("u1", "p1", Direction::Up, at(0), "c"),
            VoteRecord::new("u2", "p1", Direction::Up, at(1), "c"),
            VoteRecord::new("u1", "p1", Direction::Down, at(2), "c"),
        ];
        let (out, collapsed) = dedupe_latest(votes);
        assert_eq!(collapsed, 1);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].user_id, "u1");
        assert_eq!(out[0].direction, Direction::Down);
    }

    #[test]
    fn older_duplicate_does_not_override() {
        let votes = vec![
            VoteRecord::new("u1", "p1", Direction::Down, at(5), "c"),
            VoteRecord::new("u1", "p1", Direction::Up, at(1), "c"),
        ];
        let (out, _) = dedupe_latest(votes);
        assert_eq!(out[0].direction, Direction::Down);
    }

    #[test]
    fn direction_parse() {
        assert_eq!("UP".parse::<Direction>().unwrap(), Direction::Up);
        assert_eq!(" down ".parse::<Direction>().unwrap(), Direction::Down);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
