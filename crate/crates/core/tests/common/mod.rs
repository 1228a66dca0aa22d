#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, TimeZone, Utc};
use cura::dataset::{Direction, PostRecord, VoteRecord};
use cura::model::{FinetuneOutcome, Hyperparams, OnlineModel, Prediction, Predictor};
use sha2::{Digest, Sha256};

pub fn at(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
}

pub fn post(id: &str, author: &str, community: &str, secs: i64) -> PostRecord {
    PostRecord {
        post_id: id.into(),
        author_id: author.into(),
        community: community.into(),
        created_at: at(secs),
        nsfw: false,
        url_domain: String::new(),
        text: format!("headline {id}"),
    }
}

pub fn vote(user: &str, post: &str, up: bool, community: &str, secs: i64) -> VoteRecord {
    VoteRecord::new(user, post, Direction::from_up(up), at(secs), community)
}

pub fn names(users: &[&str]) -> BTreeSet<String> {
    users.iter().map(|u| u.to_string()).collect()
}

/// Every user in `users` votes `per_user` times on filler posts in
/// `community`, so they clear curator activity checks.
pub fn history(users: &[&str], community: &str, per_user: usize) -> (Vec<PostRecord>, Vec<VoteRecord>) {
    let posts: Vec<PostRecord> = (0..per_user)
        .map(|i| post(&format!("{community}-old{i}"), "archivist", community, -100_000 + i as i64))
        .collect();
    let votes = users
        .iter()
        .flat_map(|u| posts.iter().enumerate().map(move |(i, p)| vote(u, &p.post_id, i % 3 != 0, community, -50_000)))
        .collect();
    (posts, votes)
}

/// Deterministic stand-in for the encoder. A user's base probability for a
/// post comes from a hash unless pinned; finetuning on a vote shifts every
/// user's probability on that post toward the vote.
#[derive(Debug, Clone, Default)]
pub struct StubModel {
    pub pinned: HashMap<(String, String), f64>,
    pub shift: BTreeMap<String, f64>,
    pub step: f64,
    pub hyperparams: Hyperparams,
}

impl StubModel {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn pin(mut self, user: &str, post: &str, p: f64) -> Self {
        self.pinned.insert((user.into(), post.into()), p);
        self
    }

    pub fn p(&self, user: &str, post: &str) -> f64 {
        let base = self.pinned.get(&(user.to_string(), post.to_string())).copied().unwrap_or_else(|| {
            let h = Sha256::digest(format!("{user}\0{post}").as_bytes());
            f64::from(u16::from_le_bytes([h[0], h[1]])) / 65535.0
        });
        (base + self.shift.get(post).copied().unwrap_or(0.0)).clamp(0.0, 1.0)
    }
}

impl Predictor for StubModel {
    fn predict_at(&self, user: &str, post: &PostRecord, threshold: f64) -> Prediction {
        Prediction::new(self.p(user, &post.post_id), threshold, false)
    }
}

impl OnlineModel for StubModel {
    fn finetune(&mut self, vote: &VoteRecord, _: &PostRecord, weight: f64) -> FinetuneOutcome {
        let before = self.p(&vote.user_id, &vote.post_id);
        *self.shift.entry(vote.post_id.clone()).or_default() += f64::from(vote.direction.sign()) * self.step;
        FinetuneOutcome::Applied { loss_before: before * weight }
    }

    fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (post, s) in &self.shift {
            h.update(post.as_bytes());
            h.update(s.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}
