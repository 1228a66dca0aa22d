use std::collections::{BTreeMap, HashMap};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Direction, VoteRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Votes are assigned independently.
    ByVote,
    /// Posts are assigned, and every vote follows its post.
    ByPost,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<VoteRecord>,
    pub test: Vec<VoteRecord>,
    pub mode: SplitMode,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn train_fraction(&self) -> f64 {
        self.train.len() as f64 / (self.train.len() + self.test.len()) as f64
    }
}

/// Splits votes into train and test at `ratio` (the train share).
///
/// Under [`SplitMode::ByPost`] the post ids are shuffled and posts are
/// assigned to train while doing so keeps the train count at or below its
/// target, so the achieved ratio is as close as post granularity allows.
pub fn split_dataset(votes: &[VoteRecord], ratio: f64, mode: SplitMode, seed: u64) -> Result<DatasetSplit> {
    if votes.is_empty() {
        return Err(Error::Empty("cannot split an empty vote collection"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = (ratio * votes.len() as f64).round() as usize;

    let in_train: Vec<bool> = match mode {
        SplitMode::ByVote => {
            let mut order: Vec<usize> = (0..votes.len()).collect();
            order.shuffle(&mut rng);
            let mut flags = vec![false; votes.len()];
            for &i in &order[..target] {
                flags[i] = true;
            }
            flags
        }
        SplitMode::ByPost => {
            // BTreeMap keeps the pre-shuffle order independent of hashing.
            let mut per_post: BTreeMap<&str, usize> = BTreeMap::new();
            for v in votes {
                *per_post.entry(v.post_id.as_str()).or_default() += 1;
            }
            let mut posts: Vec<(&str, usize)> = per_post.into_iter().collect();
            posts.shuffle(&mut rng);
            let mut assigned: HashMap<&str, bool> = HashMap::with_capacity(posts.len());
            let mut train_count = 0usize;
            for (post, count) in posts {
                let take = train_count + count <= target;
                if take {
                    train_count += count;
                }
                assigned.insert(post, take);
            }
            votes.iter().map(|v| assigned[v.post_id.as_str()]).collect()
        }
    };

    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(votes.len() - target);
    for (vote, to_train) in votes.iter().zip(in_train) {
        if to_train {
            train.push(vote.clone());
        } else {
            test.push(vote.clone());
        }
    }
    Ok(DatasetSplit { train, test, mode, seed })
}

/// Downsamples upvotes so each community has as many upvotes as downvotes.
///
/// Downvotes are kept unless a community has more downvotes than upvotes, in
/// which case that community's downvotes are sampled down instead so the
/// per-community counts still match. Communities without downvotes
/// contribute nothing. Retained votes keep their input order.
pub fn build_balanced_test(test: &[VoteRecord], seed: u64) -> Vec<VoteRecord> {
    let mut sides: BTreeMap<&str, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, v) in test.iter().enumerate() {
        let entry = sides.entry(v.community.as_str()).or_default();
        match v.direction {
            Direction::Up => entry.0.push(i),
            Direction::Down => entry.1.push(i),
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; test.len()];
    for (up_idx, down_idx) in sides.values() {
        let n = up_idx.len().min(down_idx.len());
        for side in [up_idx, down_idx] {
            if side.len() == n {
                side.iter().for_each(|&i| keep[i] = true);
            } else {
                for j in index::sample(&mut rng, side.len(), n) {
                    keep[side[j]] = true;
                }
            }
        }
    }
    test.iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(v, _)| v.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn vote(u: usize, p: usize, up: bool, c: &str) -> VoteRecord {
        VoteRecord::new(
            format!("u{u}"),
            format!("p{p}"),
            Direction::from_up(up),
            Utc.timestamp_opt(u as i64 * 60, 0).unwrap(),
            c,
        )
    }

    #[test]
    fn by_vote_is_80_20_and_deterministic() {
        let votes: Vec<_> = (0..100).map(|i| vote(i, i % 13, i % 3 != 0, "c")).collect();
        let a = split_dataset(&votes, 0.8, SplitMode::ByVote, 7).unwrap();
        let b = split_dataset(&votes, 0.8, SplitMode::ByVote, 7).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (80, 20));
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn single_post_lands_on_one_side() {
        let votes: Vec<_> = (0..10).map(|i| vote(i, 0, true, "c")).collect();
        let s = split_dataset(&votes, 0.8, SplitMode::ByPost, 3).unwrap();
        assert!(s.train.is_empty() || s.test.is_empty());
        assert_eq!(s.train.len() + s.test.len(), 10);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(split_dataset(&[], 0.8, SplitMode::ByVote, 0), Err(Error::Empty(_))));
        let votes = vec![vote(0, 0, true, "c")];
        assert!(split_dataset(&votes, 1.0, SplitMode::ByVote, 0).is_err());
        assert!(split_dataset(&votes, 0.0, SplitMode::ByVote, 0).is_err());
    }

    #[test]
    fn balanced_keeps_all_downvotes() {
        let mut votes: Vec<_> = (0..10).map(|i| vote(i, i, true, "a")).collect();
        votes.extend((10..14).map(|i| vote(i, i, false, "a")));
        let out = build_balanced_test(&votes, 1);
        let up = out.iter().filter(|v| v.direction.is_up()).count();
        let down = out.len() - up;
        assert_eq!((up, down), (4, 4));
    }

    #[test]
    fn balanced_drops_communities_without_downvotes() {
        let votes: Vec<_> = (0..5).map(|i| vote(i, i, true, "a")).collect();
        assert!(build_balanced_test(&votes, 1).is_empty());
    }

    #[test]
    fn balanced_downsamples_downvotes_when_they_dominate() {
        let mut votes: Vec<_> = (0..2).map(|i| vote(i, i, true, "a")).collect();
        votes.extend((2..7).map(|i| vote(i, i, false, "a")));
        let out = build_balanced_test(&votes, 1);
        assert_eq!(out.iter().filter(|v| v.direction.is_up()).count(), 2);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn balanced_drops_downvotes_without_upvotes() {
        let votes: Vec<_> = (0..5).map(|i| vote(i, i, false, "a")).collect();
        assert!(build_balanced_test(&votes, 1).is_empty());
    }

    fn arb_votes() -> impl Strategy<Value = Vec<VoteRecord>> {
        prop::collection::vec((0usize..40, 0usize..30, prop::bool::weighted(0.7), 0usize..4), 1..400)
            .prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (u, p, up, c))| {
                        let mut v = vote(u, p, up, &format!("c{c}"));
                        v.user_id = format!("{}_{i}", v.user_id);
                        v
                    })
                    .collect()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn by_post_never_shares_posts(votes in arb_votes(), seed in any::<u64>()) {
            let s = split_dataset(&votes, 0.8, SplitMode::ByPost, seed).unwrap();
            let train: HashSet<_> = s.train.iter().map(|v| &v.post_id).collect();
            let test: HashSet<_> = s.test.iter().map(|v| &v.post_id).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert_eq!(s.train.len() + s.test.len(), votes.len());
        }

        #[test]
        fn by_vote_hits_ratio_within_one_percent(votes in arb_votes(), seed in any::<u64>()) {
            prop_assume!(votes.len() >= 100);
            let s = split_dataset(&votes, 0.8, SplitMode::ByVote, seed).unwrap();
            prop_assert!((s.train_fraction() - 0.8).abs() <= 0.01);
        }

        #[test]
        fn balanced_is_exact_per_community(votes in arb_votes(), seed in any::<u64>()) {
            let out = build_balanced_test(&votes, seed);
            let mut per: HashMap<&str, (i64, i64)> = HashMap::new();
            for v in &out {
                let e = per.entry(v.community.as_str()).or_default();
                if v.direction.is_up() { e.0 += 1 } else { e.1 += 1 }
            }
            for (_, (u, d)) in per {
                prop_assert_eq!(u, d);
            }
            prop_assert_eq!(build_balanced_test(&votes, seed), out);
        }
    }
}
