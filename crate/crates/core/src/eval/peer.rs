use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::curves::{CurvePoint, CurveReport, Tally};
use super::metrics::Scored;
use crate::dataset::{compute_stats, Direction, PostIndex, PostVoteStats, UserStats, VoteRecord};
use crate::error::{Error, Result};
use crate::model::{online_weight, FinetuneOutcome, OnlineModel, Prediction};

/// A user's votes as a sparse ±1 vector over posts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VotingVector(pub BTreeMap<String, i8>);

impl VotingVector {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        (self.0.len() as f64).sqrt()
    }
}

/// Voting vectors for every user in `votes`.
pub fn voting_vectors<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>) -> BTreeMap<String, VotingVector> {
    let mut out: BTreeMap<String, VotingVector> = BTreeMap::new();
    for v in votes {
        out.entry(v.user_id.clone())
            .or_default()
            .0
            .insert(v.post_id.clone(), v.direction.sign());
    }
    out
}

/// Dot product over shared posts divided by both norms. Zero when one side
/// is empty or nothing is shared; an error when both are empty.
pub fn cosine_similarity(u: &VotingVector, v: &VotingVector) -> Result<f64> {
    if u.is_empty() && v.is_empty() {
        return Err(Error::InvalidArgument("cosine similarity of two empty vectors".into()));
    }
    if u.is_empty() || v.is_empty() {
        return Ok(0.0);
    }
    let (small, large) = if u.0.len() <= v.0.len() { (u, v) } else { (v, u) };
    let dot: i64 = small
        .0
        .iter()
        .filter_map(|(p, &a)| large.0.get(p).map(|&b| (a * b) as i64))
        .sum();
    Ok(dot as f64 / ((u.0.len() * v.0.len()) as f64).sqrt())
}

/// Voting vectors with a post index for fast nearest-neighbour queries.
pub struct SimilarityIndex {
    vectors: BTreeMap<String, VotingVector>,
    by_post: HashMap<String, Vec<(String, i8)>>,
}

impl SimilarityIndex {
    pub fn new(train: &[VoteRecord]) -> Self {
        let vectors = voting_vectors(train);
        let mut by_post: HashMap<String, Vec<(String, i8)>> = HashMap::new();
        for (user, vec) in &vectors {
            for (post, &s) in &vec.0 {
                by_post.entry(post.clone()).or_default().push((user.clone(), s));
            }
        }
        Self { vectors, by_post }
    }

    pub fn vector(&self, user: &str) -> Option<&VotingVector> {
        self.vectors.get(user)
    }

    /// The `k` users most similar to `user`, most similar first; ties by
    /// user id. Users without training votes are never returned, and an
    /// unknown `user` gets an empty list.
    pub fn most_similar(&self, user: &str, k: usize) -> Vec<(String, f64)> {
        let Some(target) = self.vectors.get(user) else {
            return Vec::new();
        };
        let mut dots: HashMap<&str, i64> = HashMap::new();
        for (post, &a) in &target.0 {
            for (other, b) in self.by_post.get(post).into_iter().flatten() {
                *dots.entry(other.as_str()).or_default() += (a * b) as i64;
            }
        }
        let mut scored: Vec<(String, f64)> = self
            .vectors
            .iter()
            .filter(|(u, _)| u.as_str() != user)
            .map(|(u, v)| {
                let dot = dots.get(u.as_str()).copied().unwrap_or(0);
                (u.clone(), dot as f64 / ((target.0.len() * v.0.len()) as f64).sqrt())
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

/// A test vote whose prediction is tracked while peer votes arrive.
#[derive(Debug, Clone)]
pub struct Target<'a> {
    pub vote: &'a VoteRecord,
    /// Other test votes on the same post, shuffled.
    pub peers: Vec<&'a VoteRecord>,
}

#[derive(Debug, Clone)]
pub struct TargetSample<'a> {
    pub targets: Vec<Target<'a>>,
    /// Test posts with fewer than two votes, which cannot supply a peer.
    pub skipped_posts: usize,
}

/// Draws up to `trials` distinct target votes from posts with at least two
/// test votes.
pub fn sample_targets<'a>(test: &'a [VoteRecord], trials: usize, seed: u64) -> TargetSample<'a> {
    let mut by_post: BTreeMap<&str, Vec<&VoteRecord>> = BTreeMap::new();
    for v in test {
        by_post.entry(&v.post_id).or_default().push(v);
    }
    let skipped_posts = by_post.values().filter(|v| v.len() < 2).count();
    let eligible: Vec<&VoteRecord> = by_post.values().filter(|v| v.len() >= 2).flatten().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = trials.min(eligible.len());
    let targets = index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| {
            let vote = eligible[i];
            let mut peers: Vec<&VoteRecord> = by_post[vote.post_id.as_str()]
                .iter()
                .copied()
                .filter(|p| p.user_id != vote.user_id)
                .collect();
            peers.shuffle(&mut rng);
            Target { vote, peers }
        })
        .collect();
    TargetSample { targets, skipped_posts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PeerMode {
    /// Other test votes on the post, in shuffled order.
    Random,
    /// The most similar users all vote like the target.
    Support,
    /// The most similar users all vote against the target.
    Adversarial,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialTrace {
    pub user_id: String,
    pub post_id: String,
    pub actual: Direction,
    /// Upvote probability after k = 0, 1, ... peer votes.
    pub p: Vec<f64>,
    /// Peer votes actually available; later entries carry the last
    /// prediction forward.
    pub peers_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeerExperimentReport {
    pub mode: PeerMode,
    pub curve: CurveReport,
    /// Share of trials whose decision matches the majority of the peer
    /// votes seen so far (ties count as UP), per k.
    pub majority_agreement: Vec<Option<f64>>,
    pub trials: Vec<TrialTrace>,
    pub skipped_posts: usize,
    pub skipped_steps: usize,
}

impl PeerExperimentReport {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.curve.points.get(k).and_then(|p| p.accuracy)
    }
}

/// Training-set statistics for online weights, updated in place while a
/// trial runs and restored afterwards.
#[derive(Debug, Clone)]
pub struct WeightStats {
    pub users: UserStats,
    pub posts: PostVoteStats,
}

impl WeightStats {
    pub fn from_votes(train: &[VoteRecord]) -> Self {
        let (users, posts) = compute_stats(train);
        Self { users, posts }
    }
}

/// Finetunes a fresh copy of `model` on each target's peers one vote at a
/// time and records the target prediction after every step.
fn run_trials<'a, M: OnlineModel + Clone>(
    model: &M,
    posts: &PostIndex,
    stats: &WeightStats,
    targets: &[Target<'a>],
    max_peers: usize,
    mode: PeerMode,
    mut peers_for: impl FnMut(&Target<'a>) -> Vec<VoteRecord>,
) -> Result<PeerExperimentReport> {
    let mut stats = stats.clone();
    let mut tallies = vec![Tally::default(); max_peers + 1];
    let mut agree = vec![(0u64, 0u64); max_peers + 1];
    let mut traces = Vec::with_capacity(targets.len());
    let mut skipped_steps = 0;
    for target in targets {
        let vote = target.vote;
        let post = posts
            .get(&vote.post_id)
            .ok_or_else(|| Error::NotFound(format!("post {}", vote.post_id)))?;
        let mut m = model.clone();
        let peers = peers_for(target);
        let mut p = Vec::with_capacity(max_peers + 1);
        let mut current = m.predict_at(&vote.user_id, post, 0.5);
        let mut ups = 0usize;
        for k in 0..=max_peers {
            if k > 0 {
                if let Some(peer) = peers.get(k - 1) {
                    stats.users.record(peer);
                    stats.posts.record(peer);
                    let w = online_weight(peer, &stats.users, &stats.posts, m.hyperparams())?;
                    if let FinetuneOutcome::Skipped { .. } = m.finetune(peer, post, w) {
                        skipped_steps += 1;
                    }
                    current = m.predict_at(&vote.user_id, post, 0.5);
                    ups += peer.direction.is_up() as usize;
                }
            }
            p.push(current.p);
            tallies[k].add(&Scored { vote, prediction: current });
            let seen = k.min(peers.len());
            if seen > 0 {
                let majority = Direction::from_up(2 * ups >= seen);
                agree[k].0 += (current.decision == majority) as u64;
                agree[k].1 += 1;
            }
        }
        for peer in peers.iter().take(max_peers) {
            stats.users.retract(peer);
            stats.posts.retract(peer);
        }
        traces.push(TrialTrace {
            user_id: vote.user_id.clone(),
            post_id: vote.post_id.clone(),
            actual: vote.direction,
            p,
            peers_used: peers.len().min(max_peers),
        });
    }
    let points = tallies
        .iter()
        .enumerate()
        .map(|(k, t)| CurvePoint {
            label: k.to_string(),
            x: k as f64,
            count: t.count,
            accuracy: t.accuracy(),
            confidence: t.confidence(),
        })
        .collect();
    Ok(PeerExperimentReport {
        mode,
        curve: CurveReport {
            x_axis: "peer votes".into(),
            points,
        },
        majority_agreement: agree
            .iter()
            .map(|&(a, n)| (n > 0).then(|| a as f64 / n as f64))
            .collect(),
        trials: traces,
        skipped_posts: 0,
        skipped_steps,
    })
}

/// Feeds the other test votes on each target's post to the model one at a
/// time, finetuning after each, and tracks the target prediction.
pub fn peer_vote_experiment<M: OnlineModel + Clone>(
    model: &M,
    posts: &PostIndex,
    stats: &WeightStats,
    sample: &TargetSample,
    max_peers: usize,
) -> Result<PeerExperimentReport> {
    let mut report = run_trials(model, posts, stats, &sample.targets, max_peers, PeerMode::Random, |t| {
        t.peers.iter().map(|&v| v.clone()).collect()
    })?;
    report.skipped_posts = sample.skipped_posts;
    Ok(report)
}

/// Synthesizes votes on each target's post from the `k` users most similar
/// to the target, all agreeing (SUPPORT) or all disagreeing (ADVERSARIAL)
/// with the target vote.
pub fn similar_peer_experiment<M: OnlineModel + Clone>(
    model: &M,
    posts: &PostIndex,
    stats: &WeightStats,
    similarity: &SimilarityIndex,
    sample: &TargetSample,
    k: usize,
    mode: PeerMode,
) -> Result<PeerExperimentReport> {
    let flip = match mode {
        PeerMode::Support => false,
        PeerMode::Adversarial => true,
        PeerMode::Random => {
            return Err(Error::InvalidArgument(
                "similar-peer experiment needs SUPPORT or ADVERSARIAL".into(),
            ))
        }
    };
    let mut report = run_trials(model, posts, stats, &sample.targets, k, mode, |t| {
        let direction = if flip { t.vote.direction.opposite() } else { t.vote.direction };
        similarity
            .most_similar(&t.vote.user_id, k)
            .into_iter()
            .map(|(user, _)| VoteRecord::new(user, &t.vote.post_id, direction, t.vote.voted_at, &t.vote.community))
            .collect()
    })?;
    report.skipped_posts = sample.skipped_posts;
    Ok(report)
}

/// Smallest k whose accuracy reaches `level`.
pub fn votes_to_reach(report: &PeerExperimentReport, level: f64) -> Option<usize> {
    report
        .curve
        .points
        .iter()
        .position(|p| p.accuracy.is_some_and(|a| a >= level))
}

/// Predictions of a frozen model for each target, for comparisons against
/// the k = 0 point.
pub fn baseline_predictions<M: OnlineModel>(model: &M, posts: &PostIndex, sample: &TargetSample) -> Vec<Prediction> {
    sample
        .targets
        .iter()
        .map(|t| model.predict_at(&t.vote.user_id, &posts[&t.vote.post_id], 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;
    use proptest::prelude::*;

    fn vec_of(pairs: &[(&str, i8)]) -> VotingVector {
        VotingVector(pairs.iter().map(|&(p, s)| (p.to_string(), s)).collect())
    }

    #[test]
    fn cosine_examples() {
        let u = vec_of(&[("p1", 1), ("p2", 1)]);
        let v = vec_of(&[("p1", 1), ("p2", -1)]);
        assert_eq!(cosine_similarity(&u, &u).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&u, &v).unwrap(), 0.0);
        let neg = vec_of(&[("p1", -1), ("p2", -1)]);
        assert_eq!(cosine_similarity(&u, &neg).unwrap(), -1.0);
        assert_eq!(cosine_similarity(&u, &VotingVector::default()).unwrap(), 0.0);
        assert!(cosine_similarity(&VotingVector::default(), &VotingVector::default()).is_err());
    }

    proptest! {
        #[test]
        fn cosine_matches_dense_and_is_symmetric(
            a in prop::collection::btree_map(0usize..12, prop::bool::ANY, 1..12),
            b in prop::collection::btree_map(0usize..12, prop::bool::ANY, 1..12),
        ) {
            let to_vec = |m: &BTreeMap<usize, bool>| {
                VotingVector(m.iter().map(|(&p, &up)| (format!("p{p}"), if up { 1 } else { -1 })).collect())
            };
            let (u, v) = (to_vec(&a), to_vec(&b));
            let dense = |m: &BTreeMap<usize, bool>| {
                (0..12).map(|i| m.get(&i).map_or(0.0, |&up| if up { 1.0 } else { -1.0 })).collect::<Vec<f64>>()
            };
            let (du, dv) = (dense(&a), dense(&b));
            let dot: f64 = du.iter().zip(&dv).map(|(x, y)| x * y).sum();
            let norm = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>().sqrt();
            let expected = dot / (norm(&du) * norm(&dv));
            let got = cosine_similarity(&u, &v).unwrap();
            prop_assert!((got - expected).abs() < 1e-12);
            prop_assert_eq!(got, cosine_similarity(&v, &u).unwrap());
        }
    }

    #[test]
    fn most_similar_orders_by_similarity_then_id() {
        let v = |u: &str, p: &str, d| VoteRecord::new(u, p, d, Utc::now(), "c");
        use Direction::*;
        let train = [
            v("t", "a", Up),
            v("t", "b", Up),
            v("twin", "a", Up),
            v("twin", "b", Up),
            v("anti", "a", Down),
            v("anti", "b", Down),
            v("half", "a", Up),
            v("x", "z", Up),
            v("w", "z", Down),
        ];
        let idx = SimilarityIndex::new(&train);
        let ranked: Vec<String> = idx.most_similar("t", 10).into_iter().map(|(u, _)| u).collect();
        assert_eq!(ranked, ["twin", "half", "w", "x", "anti"]);
        assert!(idx.most_similar("nobody", 3).is_empty());
    }

    #[test]
    fn targets_skip_single_vote_posts() {
        let v = |u: &str, p: &str| VoteRecord::new(u, p, Direction::Up, Utc::now(), "c");
        let test = [v("a", "p"), v("b", "p"), v("c", "p"), v("d", "solo")];
        let s = sample_targets(&test, 10, 1);
        assert_eq!(s.skipped_posts, 1);
        assert_eq!(s.targets.len(), 3);
        for t in &s.targets {
            assert_eq!(t.peers.len(), 2);
            assert!(t.peers.iter().all(|p| p.user_id != t.vote.user_id));
        }
        let again = sample_targets(&test, 10, 1);
        let ids = |s: &TargetSample| s.targets.iter().map(|t| t.vote.user_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&s), ids(&again));
    }
}
