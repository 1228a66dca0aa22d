use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Direction, VoteRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub up: u64,
    pub down: u64,
}

impl VoteCounts {
    pub fn total(&self) -> u64 {
        self.up + self.down
    }

    pub fn get(&self, direction: Direction) -> u64 {
        match direction {
            Direction::Up => self.up,
            Direction::Down => self.down,
        }
    }

    pub fn add(&mut self, direction: Direction) {
        match direction {
            Direction::Up => self.up += 1,
            Direction::Down => self.down += 1,
        }
    }

    pub fn remove(&mut self, direction: Direction) {
        match direction {
            Direction::Up => self.up = self.up.saturating_sub(1),
            Direction::Down => self.down = self.down.saturating_sub(1),
        }
    }

    /// Fraction of upvotes, `None` when there are no votes.
    pub fn up_rate(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.up as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserActivity {
    pub overall: VoteCounts,
    pub by_community: HashMap<String, VoteCounts>,
}

/// Per-user vote counts by direction and community.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserStats {
    users: HashMap<String, UserActivity>,
}

impl UserStats {
    pub fn record(&mut self, vote: &VoteRecord) {
        let entry = self.users.entry(vote.user_id.clone()).or_default();
        entry.overall.add(vote.direction);
        entry
            .by_community
            .entry(vote.community.clone())
            .or_default()
            .add(vote.direction);
    }

    pub fn retract(&mut self, vote: &VoteRecord) {
        if let Some(entry) = self.users.get_mut(&vote.user_id) {
            entry.overall.remove(vote.direction);
            if let Some(c) = entry.by_community.get_mut(&vote.community) {
                c.remove(vote.direction);
            }
        }
    }

    /// Lifetime votes by `user` in `direction`.
    pub fn count(&self, user: &str, direction: Direction) -> u64 {
        self.users.get(user).map_or(0, |a| a.overall.get(direction))
    }

    pub fn total(&self, user: &str) -> u64 {
        self.users.get(user).map_or(0, |a| a.overall.total())
    }

    pub fn in_community(&self, user: &str, community: &str) -> VoteCounts {
        self.users
            .get(user)
            .and_then(|a| a.by_community.get(community))
            .copied()
            .unwrap_or_default()
    }

    pub fn activity(&self, user: &str) -> Option<&UserActivity> {
        self.users.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = (&String, &UserActivity)> {
        self.users.iter()
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Per-post vote counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PostVoteStats {
    posts: HashMap<String, VoteCounts>,
}

impl PostVoteStats {
    pub fn record(&mut self, vote: &VoteRecord) {
        self.posts
            .entry(vote.post_id.clone())
            .or_default()
            .add(vote.direction);
    }

    pub fn retract(&mut self, vote: &VoteRecord) {
        if let Some(c) = self.posts.get_mut(&vote.post_id) {
            c.remove(vote.direction);
        }
    }

    pub fn get(&self, post: &str) -> VoteCounts {
        self.posts.get(post).copied().unwrap_or_default()
    }

    pub fn posts(&self) -> impl Iterator<Item = (&String, &VoteCounts)> {
        self.posts.iter()
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

pub fn compute_stats<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>) -> (UserStats, PostVoteStats) {
    let mut users = UserStats::default();
    let mut posts = PostVoteStats::default();
    for v in votes {
        users.record(v);
        posts.record(v);
    }
    (users, posts)
}
