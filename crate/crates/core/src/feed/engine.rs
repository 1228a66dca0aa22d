use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{read_all, Event, EventLog, SnapshotFile, SNAPSHOT_FORMAT, SNAPSHOT_VERSION};
use super::{
    broadcast_feed, check_curators, curator_upvote_rate, feed_order, rank_feed, route_post, validate_thresholds,
    CommunityConfig, CuratorBreakdown, FeedEntry, PostStatus, Stage, DEFAULT_MIN_CURATOR_VOTES,
};
use crate::dataset::{dedupe_latest, PostRecord, PostVoteStats, UserStats, VoteRecord};
use crate::error::{Error, Result};
use crate::model::{online_weight, FinetuneOutcome, ModelCheckpoint, OnlineModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostState {
    pub record: PostRecord,
    /// Latest vote per user.
    pub votes: BTreeMap<String, VoteRecord>,
    /// Absent until the community has curators.
    pub status: Option<PostStatus>,
}

#[derive(Debug, Clone, Default)]
struct CommunityState {
    /// Every config the community has had; version `v` is at `v - 1`.
    configs: Vec<CommunityConfig>,
    posts: BTreeSet<String>,
}

impl CommunityState {
    fn current(&self) -> Option<&CommunityConfig> {
        self.configs.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Inventory {
    All,
    Sample { n: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRequest {
    pub community: String,
    pub curators: BTreeSet<String>,
    pub curation_threshold: f64,
    pub confidence_threshold: f64,
    #[serde(default = "all_posts")]
    pub inventory: Inventory,
}

fn all_posts() -> Inventory {
    Inventory::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewEntry {
    pub post_id: String,
    pub curator_upvote_rate: f64,
    pub stage: Stage,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewResult {
    pub community: String,
    pub curation_threshold: f64,
    pub confidence_threshold: f64,
    pub frontstage: usize,
    /// Ranked by rate, newest first on ties.
    pub entries: Vec<PreviewEntry>,
}

/// Result of applying a vote.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteOutcome {
    /// False when the vote repeated the user's current vote.
    pub changed: bool,
    pub status: Option<PostStatus>,
}

/// Posts, votes, curator configs and the live model for every community.
///
/// All mutation goes through `&mut self`; callers that share an engine
/// serialize writers, which also serializes finetuning of the one model all
/// communities share.
pub struct FeedEngine<M = ModelCheckpoint> {
    model: M,
    posts: HashMap<String, PostState>,
    communities: BTreeMap<String, CommunityState>,
    users: UserStats,
    post_stats: PostVoteStats,
    seq: u64,
    log: Option<EventLog>,
}

impl<M: OnlineModel> FeedEngine<M> {
    /// Builds an engine over existing posts and vote history. Repeated
    /// votes collapse to the latest; votes on unknown posts only count
    /// toward user activity.
    pub fn new(model: M, posts: impl IntoIterator<Item = PostRecord>, history: Vec<VoteRecord>) -> Self {
        let mut engine = Self {
            model,
            posts: HashMap::new(),
            communities: BTreeMap::new(),
            users: UserStats::default(),
            post_stats: PostVoteStats::default(),
            seq: 0,
            log: None,
        };
        for post in posts {
            engine.insert_post(post);
        }
        let (history, _) = dedupe_latest(history);
        for vote in history {
            engine.users.record(&vote);
            engine.post_stats.record(&vote);
            engine.communities.entry(vote.community.clone()).or_default();
            if let Some(state) = engine.posts.get_mut(&vote.post_id) {
                state.votes.insert(vote.user_id.clone(), vote);
            }
        }
        engine
    }

    /// Like [`FeedEngine::new`], then replays the event logs under `dir`
    /// and appends new events there.
    pub fn open(
        model: M,
        posts: impl IntoIterator<Item = PostRecord>,
        history: Vec<VoteRecord>,
        dir: impl AsRef<Path>,
    ) -> Result<Self> {
        let mut engine = Self::new(model, posts, history);
        let log = EventLog::open(dir.as_ref())?;
        for event in read_all(log.dir())? {
            engine.seq = event.seq();
            engine.apply(event)?;
        }
        engine.log = Some(log);
        Ok(engine)
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn user_stats(&self) -> &UserStats {
        &self.users
    }

    /// Sequence number of the last logged event.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn communities(&self) -> impl Iterator<Item = &str> {
        self.communities.keys().map(String::as_str)
    }

    pub fn has_community(&self, community: &str) -> bool {
        self.communities.contains_key(community)
    }

    pub fn config(&self, community: &str) -> Option<&CommunityConfig> {
        self.communities.get(community).and_then(CommunityState::current)
    }

    pub fn config_history(&self, community: &str) -> &[CommunityConfig] {
        self.communities.get(community).map_or(&[], |c| &c.configs)
    }

    pub fn post(&self, post_id: &str) -> Option<&PostState> {
        self.posts.get(post_id)
    }

    pub fn posts_in(&self, community: &str) -> impl Iterator<Item = &PostState> {
        self.communities
            .get(community)
            .into_iter()
            .flat_map(|c| c.posts.iter())
            .map(|id| &self.posts[id])
    }

    pub fn post_status(&self, post_id: &str) -> Result<Option<&PostStatus>> {
        self.posts
            .get(post_id)
            .map(|p| p.status.as_ref())
            .ok_or_else(|| Error::NotFound(format!("post {post_id}")))
    }

    fn insert_post(&mut self, post: PostRecord) {
        self.communities
            .entry(post.community.clone())
            .or_default()
            .posts
            .insert(post.post_id.clone());
        self.posts.insert(
            post.post_id.clone(),
            PostState {
                record: post,
                votes: BTreeMap::new(),
                status: None,
            },
        );
    }

    fn known_community(&self, community: &str) -> Result<&CommunityState> {
        self.communities
            .get(community)
            .ok_or_else(|| Error::NotFound(format!("community {community}")))
    }

    fn min_curator_votes(&self, community: &str) -> u64 {
        self.config(community).map_or(DEFAULT_MIN_CURATOR_VOTES, |c| c.min_curator_votes)
    }

    /// Writes `event` ahead of applying it. Events are validated first, so
    /// applying a logged event cannot fail on bad input.
    fn commit(&mut self, mut event: Event) -> Result<()> {
        let seq = self.seq + 1;
        match &mut event {
            Event::Config { seq: s, .. } | Event::Submit { seq: s, .. } | Event::Vote { seq: s, .. } => *s = seq,
        }
        if let Some(log) = &mut self.log {
            log.append(&event)?;
        }
        self.seq = seq;
        self.apply(event)
    }

    fn apply(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Config { at, config, .. } => {
                let community = config.community.clone();
                self.communities.entry(community.clone()).or_default().configs.push(config);
                self.reevaluate_community(&community, at)
            }
            Event::Submit { post, .. } => {
                let author_vote = VoteRecord::new(
                    &post.author_id,
                    &post.post_id,
                    crate::dataset::Direction::Up,
                    post.created_at,
                    &post.community,
                );
                let (id, at) = (post.post_id.clone(), post.created_at);
                self.insert_post(post);
                self.users.record(&author_vote);
                self.post_stats.record(&author_vote);
                self.posts.get_mut(&id).expect("inserted").votes.insert(author_vote.user_id.clone(), author_vote);
                self.reevaluate(&id, at)
            }
            Event::Vote { vote, .. } => {
                let state = self
                    .posts
                    .get_mut(&vote.post_id)
                    .ok_or_else(|| Error::Store(format!("vote on unknown post {}", vote.post_id)))?;
                if let Some(old) = state.votes.insert(vote.user_id.clone(), vote.clone()) {
                    self.users.retract(&old);
                    self.post_stats.retract(&old);
                }
                self.users.record(&vote);
                self.post_stats.record(&vote);
                let weight = online_weight(&vote, &self.users, &self.post_stats, self.model.hyperparams())?;
                let post = &self.posts[&vote.post_id].record;
                if let FinetuneOutcome::Skipped { reason } = self.model.finetune(&vote, post, weight) {
                    tracing::warn!(user = %vote.user_id, post = %vote.post_id, %reason, "finetune step skipped");
                }
                self.reevaluate(&vote.post_id, vote.voted_at)
            }
        }
    }

    /// Records a new post with its author's upvote and routes it.
    pub fn on_submit(&mut self, post: PostRecord) -> Result<Option<PostStatus>> {
        if self.posts.contains_key(&post.post_id) {
            return Err(Error::AlreadyExists(format!("post {}", post.post_id)));
        }
        if post.post_id.is_empty() || post.author_id.is_empty() || post.community.is_empty() {
            return Err(Error::validation("post needs an id, an author and a community"));
        }
        let id = post.post_id.clone();
        self.commit(Event::Submit { seq: 0, post })?;
        Ok(self.posts[&id].status.clone())
    }

    /// Records `vote` (replacing the user's earlier vote on the post),
    /// takes one finetuning step on it and re-routes the post. Repeating
    /// the user's current vote changes nothing.
    pub fn on_new_vote(&mut self, vote: VoteRecord) -> Result<VoteOutcome> {
        let state = self
            .posts
            .get(&vote.post_id)
            .ok_or_else(|| Error::NotFound(format!("post {}", vote.post_id)))?;
        if vote.community != state.record.community {
            return Err(Error::validation(format!(
                "vote names community {} but post {} is in {}",
                vote.community, vote.post_id, state.record.community
            )));
        }
        if state.votes.get(&vote.user_id).is_some_and(|v| v.direction == vote.direction) {
            return Ok(VoteOutcome {
                changed: false,
                status: state.status.clone(),
            });
        }
        let id = vote.post_id.clone();
        self.commit(Event::Vote { seq: 0, vote })?;
        Ok(VoteOutcome {
            changed: true,
            status: self.posts[&id].status.clone(),
        })
    }

    /// Replaces the curator set. An unchanged set keeps the current
    /// version.
    pub fn set_curators(
        &mut self,
        community: &str,
        curators: BTreeSet<String>,
        at: DateTime<Utc>,
    ) -> Result<CommunityConfig> {
        let state = self.known_community(community)?;
        check_curators(&curators, &self.users, community, self.min_curator_votes(community))?;
        let next = match state.current() {
            Some(current) => CommunityConfig {
                curators,
                version: current.version + 1,
                ..current.clone()
            },
            None => CommunityConfig::new(community, curators),
        };
        self.update_config(next, at)
    }

    pub fn set_thresholds(
        &mut self,
        community: &str,
        curation_threshold: f64,
        confidence_threshold: f64,
        at: DateTime<Utc>,
    ) -> Result<CommunityConfig> {
        validate_thresholds(curation_threshold, confidence_threshold)?;
        let current = self
            .known_community(community)?
            .current()
            .ok_or_else(|| Error::validation(format!("{community} has no curators yet")))?;
        let next = CommunityConfig {
            curation_threshold,
            confidence_threshold,
            version: current.version + 1,
            ..current.clone()
        };
        self.update_config(next, at)
    }

    fn update_config(&mut self, next: CommunityConfig, at: DateTime<Utc>) -> Result<CommunityConfig> {
        next.validate()?;
        if let Some(current) = self.config(&next.community) {
            if current.same_settings(&next) {
                return Ok(current.clone());
            }
        }
        self.commit(Event::Config {
            seq: 0,
            at,
            config: next.clone(),
        })?;
        Ok(next)
    }

    /// Rate, breakdown and stage for a post under its community's current
    /// config and the current model. `None` when the community has no
    /// curators.
    pub fn evaluate(&self, post_id: &str) -> Result<Option<(f64, CuratorBreakdown, Stage)>> {
        let state = self
            .posts
            .get(post_id)
            .ok_or_else(|| Error::NotFound(format!("post {post_id}")))?;
        let Some(config) = self.config(&state.record.community) else {
            return Ok(None);
        };
        let (rate, breakdown) = curator_upvote_rate(
            &state.record,
            |u| state.votes.get(u).map(|v| v.direction),
            &self.model,
            &config.curators,
            config.confidence_threshold,
        )?;
        Ok(Some((rate, breakdown, route_post(rate, config.curation_threshold))))
    }

    fn reevaluate(&mut self, post_id: &str, at: DateTime<Utc>) -> Result<()> {
        let Some((rate, breakdown, stage)) = self.evaluate(post_id)? else {
            return Ok(());
        };
        let state = self.posts.get_mut(post_id).expect("evaluated");
        let version = self.communities[&state.record.community].current().expect("evaluated").version;
        state.status = Some(PostStatus {
            post_id: post_id.to_string(),
            community: state.record.community.clone(),
            curator_upvote_rate: rate,
            stage,
            breakdown,
            last_evaluated_at: at,
            config_version: version,
        });
        Ok(())
    }

    /// Re-routes every post in `community` against the current model.
    pub fn reevaluate_community(&mut self, community: &str, at: DateTime<Utc>) -> Result<()> {
        let ids: Vec<String> = self
            .communities
            .get(community)
            .map(|c| c.posts.iter().cloned().collect())
            .unwrap_or_default();
        for id in ids {
            self.reevaluate(&id, at)?;
        }
        Ok(())
    }

    /// Routed posts of `community`, optionally of one stage, ranked by
    /// curator upvote rate and then recency.
    pub fn generate_feed(&self, community: &str, stage: Option<Stage>, limit: Option<usize>) -> Result<Vec<FeedEntry>> {
        self.known_community(community)?;
        let entries = self
            .posts_in(community)
            .filter_map(|p| p.status.as_ref().map(|s| (p, s)))
            .filter(|(_, s)| stage.is_none_or(|st| s.stage == st))
            .map(|(p, s)| FeedEntry {
                post_id: p.record.post_id.clone(),
                score: s.curator_upvote_rate,
                created_at: p.record.created_at,
                stage: Some(s.stage),
            })
            .collect();
        Ok(rank_feed(entries, limit))
    }

    /// Every post in `community` ranked by net votes.
    pub fn broadcast_feed(&self, community: &str, limit: Option<usize>) -> Result<Vec<FeedEntry>> {
        self.known_community(community)?;
        Ok(broadcast_feed(
            self.posts_in(community).map(|p| &p.record),
            self.posts_in(community).flat_map(|p| p.votes.values()),
            limit,
        ))
    }

    /// The feed `request` would produce, without changing anything.
    pub fn preview(&self, request: &PreviewRequest) -> Result<PreviewResult> {
        validate_thresholds(request.curation_threshold, request.confidence_threshold)?;
        let state = self.known_community(&request.community)?;
        check_curators(
            &request.curators,
            &self.users,
            &request.community,
            self.min_curator_votes(&request.community),
        )?;
        let ids: Vec<&String> = state.posts.iter().collect();
        let chosen: Vec<&String> = match request.inventory {
            Inventory::All => ids,
            Inventory::Sample { n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, ids.len(), n.min(ids.len())).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| ids[i]).collect()
            }
        };
        let mut entries = Vec::with_capacity(chosen.len());
        for id in chosen {
            let post = &self.posts[id];
            let (rate, _) = curator_upvote_rate(
                &post.record,
                |u| post.votes.get(u).map(|v| v.direction),
                &self.model,
                &request.curators,
                request.confidence_threshold,
            )?;
            entries.push(FeedEntry {
                post_id: id.clone(),
                score: rate,
                created_at: post.record.created_at,
                stage: Some(route_post(rate, request.curation_threshold)),
            });
        }
        entries.sort_by(feed_order);
        let entries: Vec<PreviewEntry> = entries
            .into_iter()
            .map(|e| PreviewEntry {
                post_id: e.post_id,
                curator_upvote_rate: e.score,
                stage: e.stage.expect("set above"),
                created_at: e.created_at,
            })
            .collect();
        Ok(PreviewResult {
            community: request.community.clone(),
            curation_threshold: request.curation_threshold,
            confidence_threshold: request.confidence_threshold,
            frontstage: entries.iter().filter(|e| e.stage == Stage::Frontstage).count(),
            entries,
        })
    }

    /// Hash over the model, configs, votes and statuses.
    pub fn state_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.fingerprint().as_bytes());
        hasher.update(self.seq.to_le_bytes());
        for (name, c) in &self.communities {
            hasher.update(name.as_bytes());
            hasher.update(serde_json::to_vec(&c.configs).expect("configs serialize"));
        }
        let mut ids: Vec<&String> = self.posts.keys().collect();
        ids.sort();
        for id in ids {
            hasher.update(serde_json::to_vec(&self.posts[id]).expect("post state serializes"));
        }
        hex::encode(hasher.finalize())
    }

    pub fn snapshot(&self) -> SnapshotFile {
        SnapshotFile {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            seq: self.seq,
            statuses: self
                .posts
                .values()
                .filter_map(|p| p.status.clone().map(|s| (p.record.post_id.clone(), s)))
                .collect(),
        }
    }

    /// Writes the status snapshot next to the event logs. A no-op for an
    /// engine without a log directory.
    pub fn write_snapshot(&self) -> Result<()> {
        match &self.log {
            Some(log) => log.write_snapshot(&self.snapshot()),
            None => Ok(()),
        }
    }
}
