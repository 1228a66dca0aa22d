//! Curator-based routing of posts between the frontstage feed and the
//! backstage holding area.
//!
//! A post's curator upvote rate counts each curator once: their actual vote
//! if they cast one, otherwise the model's prediction gated by the
//! confidence threshold. Posts whose rate reaches the curation threshold
//! are frontstage.

mod engine;
mod log;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{Direction, PostRecord, UserStats, VoteRecord};
use crate::error::{Error, Result};
use crate::model::Predictor;

pub use engine::{FeedEngine, Inventory, PostState, PreviewEntry, PreviewRequest, PreviewResult, VoteOutcome};
pub use log::{
    read_log, read_snapshot, Event, LogHeader, SnapshotFile, LOG_FORMAT, LOG_VERSION, SNAPSHOT_FILE, SNAPSHOT_FORMAT,
    SNAPSHOT_VERSION,
};

pub const DEFAULT_CURATION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_CURATOR_VOTES: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityConfig {
    pub community: String,
    pub curators: BTreeSet<String>,
    /// Minimum curator upvote rate for the frontstage.
    pub curation_threshold: f64,
    /// Minimum predicted probability for a non-voting curator to count as
    /// an upvote.
    pub confidence_threshold: f64,
    /// Votes in the community a user needs before they can be selected.
    pub min_curator_votes: u64,
    /// Starts at 1 and increases with every change.
    pub version: u64,
}

impl CommunityConfig {
    pub fn new(community: impl Into<String>, curators: impl IntoIterator<Item = String>) -> Self {
        Self {
            community: community.into(),
            curators: curators.into_iter().collect(),
            curation_threshold: DEFAULT_CURATION_THRESHOLD,
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            min_curator_votes: DEFAULT_MIN_CURATOR_VOTES,
            version: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_thresholds(self.curation_threshold, self.confidence_threshold)?;
        if self.curators.is_empty() {
            return Err(Error::validation("curator set is empty"));
        }
        Ok(())
    }

    /// Same curators and thresholds, ignoring the version.
    pub fn same_settings(&self, other: &CommunityConfig) -> bool {
        self.community == other.community
            && self.curators == other.curators
            && self.curation_threshold == other.curation_threshold
            && self.confidence_threshold == other.confidence_threshold
            && self.min_curator_votes == other.min_curator_votes
    }
}

pub fn validate_thresholds(curation: f64, confidence: f64) -> Result<()> {
    for (name, v) in [("curation_threshold", curation), ("confidence_threshold", confidence)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::validation(format!("{name} must be in [0, 1], got {v}")));
        }
    }
    Ok(())
}

/// Rejects an empty set or any user with fewer than `min_votes` votes in
/// `community`; the error lists every offending user.
pub fn check_curators(curators: &BTreeSet<String>, stats: &UserStats, community: &str, min_votes: u64) -> Result<()> {
    if curators.is_empty() {
        return Err(Error::validation("curator set is empty"));
    }
    let under: Vec<String> = curators
        .iter()
        .filter(|u| stats.in_community(u, community).total() < min_votes)
        .cloned()
        .collect();
    if under.is_empty() {
        return Ok(());
    }
    Err(Error::Validation {
        message: format!(
            "{} curator(s) have fewer than {min_votes} votes in {community}: {}",
            under.len(),
            under.join(", ")
        ),
        users: under,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Frontstage,
    Backstage,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frontstage" => Ok(Stage::Frontstage),
            "backstage" => Ok(Stage::Backstage),
            other => Err(Error::InvalidArgument(format!("unknown stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VoteSource {
    ActualUp,
    ActualDown,
    PredictedUp,
    PredictedDown,
}

impl VoteSource {
    pub fn counts_up(self) -> bool {
        matches!(self, VoteSource::ActualUp | VoteSource::PredictedUp)
    }

    pub fn is_actual(self) -> bool {
        matches!(self, VoteSource::ActualUp | VoteSource::ActualDown)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratorEntry {
    pub user_id: String,
    pub source: VoteSource,
    /// Predicted upvote probability; absent for actual votes.
    pub confidence: Option<f64>,
}

/// One entry per curator, ordered by user id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CuratorBreakdown(pub Vec<CuratorEntry>);

impl CuratorBreakdown {
    pub fn upvotes(&self) -> usize {
        self.0.iter().filter(|e| e.source.counts_up()).count()
    }

    pub fn get(&self, user: &str) -> Option<&CuratorEntry> {
        self.0
            .binary_search_by(|e| e.user_id.as_str().cmp(user))
            .ok()
            .map(|i| &self.0[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostStatus {
    pub post_id: String,
    pub community: String,
    pub curator_upvote_rate: f64,
    pub stage: Stage,
    pub breakdown: CuratorBreakdown,
    pub last_evaluated_at: DateTime<Utc>,
    pub config_version: u64,
}

/// Curator upvote rate of `post`. `actual` returns a curator's recorded
/// vote on the post, if any.
pub fn curator_upvote_rate<P: Predictor + ?Sized>(
    post: &PostRecord,
    actual: impl Fn(&str) -> Option<Direction>,
    model: &P,
    curators: &BTreeSet<String>,
    confidence_threshold: f64,
) -> Result<(f64, CuratorBreakdown)> {
    if curators.is_empty() {
        return Err(Error::validation("curator set is empty"));
    }
    let entries: Vec<CuratorEntry> = curators
        .iter()
        .map(|user| match actual(user) {
            Some(d) => CuratorEntry {
                user_id: user.clone(),
                source: if d.is_up() { VoteSource::ActualUp } else { VoteSource::ActualDown },
                confidence: None,
            },
            None => {
                let pred = model.predict_at(user, post, confidence_threshold);
                CuratorEntry {
                    user_id: user.clone(),
                    source: if pred.decision.is_up() {
                        VoteSource::PredictedUp
                    } else {
                        VoteSource::PredictedDown
                    },
                    confidence: Some(pred.p),
                }
            }
        })
        .collect();
    let breakdown = CuratorBreakdown(entries);
    let rate = breakdown.upvotes() as f64 / curators.len() as f64;
    Ok((rate, breakdown))
}

pub fn route_post(rate: f64, curation_threshold: f64) -> Stage {
    if rate >= curation_threshold {
        Stage::Frontstage
    } else {
        Stage::Backstage
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedEntry {
    pub post_id: String,
    /// Curator upvote rate in curated feeds, net votes in broadcast feeds.
    pub score: f64,
    pub created_at: DateTime<Utc>,
    pub stage: Option<Stage>,
}

/// Descending score, then newest first, then post id.
pub fn feed_order(a: &FeedEntry, b: &FeedEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.created_at.cmp(&a.created_at))
        .then_with(|| a.post_id.cmp(&b.post_id))
}

pub fn rank_feed(mut entries: Vec<FeedEntry>, limit: Option<usize>) -> Vec<FeedEntry> {
    entries.sort_by(feed_order);
    if let Some(limit) = limit {
        entries.truncate(limit);
    }
    entries
}

/// `posts` ranked by upvotes minus downvotes among `votes`, then recency.
pub fn broadcast_feed<'a>(
    posts: impl IntoIterator<Item = &'a PostRecord>,
    votes: impl IntoIterator<Item = &'a VoteRecord>,
    limit: Option<usize>,
) -> Vec<FeedEntry> {
    let mut score: HashMap<&str, i64> = HashMap::new();
    for v in votes {
        *score.entry(v.post_id.as_str()).or_default() += v.direction.sign() as i64;
    }
    let entries = posts
        .into_iter()
        .map(|p| FeedEntry {
            post_id: p.post_id.clone(),
            score: score.get(p.post_id.as_str()).copied().unwrap_or(0) as f64,
            created_at: p.created_at,
            stage: None,
        })
        .collect();
    rank_feed(entries, limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prediction;
    use std::collections::HashMap;

    /// Returns a fixed probability per user.
    struct Table(HashMap<String, f64>);

    impl Predictor for Table {
        fn predict_at(&self, user: &str, _: &PostRecord, threshold: f64) -> Prediction {
            Prediction::new(self.0.get(user).copied().unwrap_or(0.0), threshold, false)
        }
    }

    fn post() -> PostRecord {
        PostRecord {
            post_id: "p".into(),
            author_id: "a".into(),
            community: "c".into(),
            created_at: Utc::now(),
            nsfw: false,
            url_domain: String::new(),
            text: "hello".into(),
        }
    }

    fn set(users: &[&str]) -> BTreeSet<String> {
        users.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn three_of_five_curators() {
        let curators = set(&["a", "b", "c", "d", "e"]);
        let actual: HashMap<&str, Direction> =
            [("a", Direction::Up), ("b", Direction::Up), ("d", Direction::Down), ("e", Direction::Down)].into();
        let model = Table([("c".to_string(), 0.9)].into());
        let (rate, b) = curator_upvote_rate(&post(), |u| actual.get(u).copied(), &model, &curators, 0.5).unwrap();
        assert_eq!(rate, 0.6);
        assert_eq!(b.get("c").unwrap().source, VoteSource::PredictedUp);
        assert_eq!(b.get("c").unwrap().confidence, Some(0.9));
        assert_eq!(b.get("a").unwrap().confidence, None);
        assert_eq!(route_post(rate, 0.5), Stage::Frontstage);
    }

    #[test]
    fn actual_votes_override_the_model() {
        let curators = set(&["a", "b"]);
        let model = Table([("a".to_string(), 0.0), ("b".to_string(), 0.0)].into());
        let (rate, _) = curator_upvote_rate(&post(), |_| Some(Direction::Up), &model, &curators, 0.5).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn routing_boundary() {
        assert_eq!(route_post(0.5, 0.5), Stage::Frontstage);
        assert_eq!(route_post(0.49, 0.5), Stage::Backstage);
    }

    #[test]
    fn empty_curators_rejected() {
        let model = Table(HashMap::new());
        assert!(curator_upvote_rate(&post(), |_| None, &model, &BTreeSet::new(), 0.5).is_err());
    }

    #[test]
    fn curator_check_names_offenders() {
        let mut stats = UserStats::default();
        let t = Utc::now();
        for i in 0..5 {
            stats.record(&VoteRecord::new("busy", format!("p{i}"), Direction::Up, t, "c"));
        }
        for i in 0..4 {
            stats.record(&VoteRecord::new("quiet", format!("p{i}"), Direction::Up, t, "c"));
        }
        check_curators(&set(&["busy"]), &stats, "c", 5).unwrap();
        match check_curators(&set(&["busy", "quiet", "ghost"]), &stats, "c", 5) {
            Err(Error::Validation { users, .. }) => assert_eq!(users, ["ghost", "quiet"]),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn feed_ties_prefer_newer_posts() {
        let t = Utc::now();
        let e = |id: &str, score, mins| FeedEntry {
            post_id: id.into(),
            score,
            created_at: t + chrono::Duration::minutes(mins),
            stage: None,
        };
        let ranked = rank_feed(vec![e("old", 0.6, 0), e("top", 0.8, 0), e("new", 0.6, 5)], Some(2));
        let ids: Vec<&str> = ranked.iter().map(|e| e.post_id.as_str()).collect();
        assert_eq!(ids, ["top", "new"]);
    }

    #[test]
    fn broadcast_ranks_by_net_votes() {
        let t = Utc::now();
        let mut a = post();
        a.post_id = "a".into();
        let mut b = post();
        b.post_id = "b".into();
        let mut votes = Vec::new();
        for (i, d) in [Direction::Up, Direction::Up, Direction::Up, Direction::Up, Direction::Up, Direction::Down]
            .into_iter()
            .enumerate()
        {
            votes.push(VoteRecord::new(format!("u{i}"), "a", d, t, "c"));
        }
        for i in 0..3 {
            votes.push(VoteRecord::new(format!("u{i}"), "b", Direction::Up, t, "c"));
        }
        let feed = broadcast_feed([&b, &a], &votes, None);
        assert_eq!(feed[0].post_id, "a");
        assert_eq!(feed[0].score, 4.0);
        assert!(broadcast_feed([], &votes, None).is_empty());
    }
}
