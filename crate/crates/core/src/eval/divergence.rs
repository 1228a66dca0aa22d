use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stats::{pearson, spearman};
use crate::dataset::{Direction, PostRecord, UserStats, VoteRecord};
use crate::error::{Error, Result};
use crate::feed::{curator_upvote_rate, route_post, FeedEntry, Stage};
use crate::model::Predictor;

pub const DEFAULT_GROUP_MIN_VOTES: u64 = 5;
pub const DEFAULT_GROUP_MIN_UP_RATE: f64 = 0.7;
pub const DEFAULT_RANDOM_GROUP_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratorGroup {
    pub name: String,
    pub curators: BTreeSet<String>,
}

impl CuratorGroup {
    pub fn new(name: impl Into<String>, curators: impl IntoIterator<Item = String>) -> Self {
        Self {
            name: name.into(),
            curators: curators.into_iter().collect(),
        }
    }
}

/// Users with at least one vote in `source` who cast at least `min_votes`
/// votes in `affinity` with an upvote rate of at least `min_up_rate` there.
pub fn select_curator_group<'a>(
    votes: impl IntoIterator<Item = &'a VoteRecord>,
    source: &str,
    affinity: &str,
    min_votes: u64,
    min_up_rate: f64,
) -> BTreeSet<String> {
    let (stats, _) = crate::dataset::compute_stats(votes);
    stats
        .users()
        .filter(|(_, a)| a.by_community.get(source).is_some_and(|c| c.total() > 0))
        .filter(|(_, a)| {
            a.by_community
                .get(affinity)
                .is_some_and(|c| c.total() >= min_votes && c.up as f64 >= min_up_rate * c.total() as f64)
        })
        .map(|(u, _)| u.clone())
        .collect()
}

/// `n` users drawn uniformly from those who voted in `community` (all of
/// them when fewer).
pub fn random_group(stats: &UserStats, community: &str, n: usize, seed: u64) -> BTreeSet<String> {
    let mut members: Vec<&String> = stats
        .users()
        .filter(|(_, a)| a.by_community.get(community).is_some_and(|c| c.total() > 0))
        .map(|(u, _)| u)
        .collect();
    members.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    index::sample(&mut rng, members.len(), n.min(members.len()))
        .into_iter()
        .map(|i| members[i].clone())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub groups: Vec<String>,
    pub posts: Vec<String>,
    /// `rates[g][i]`: group `g`'s predicted upvote rate on `posts[i]`.
    pub rates: Vec<Vec<f64>>,
    /// Pairwise Pearson correlation of the rate vectors; `None` when a
    /// vector is constant.
    pub matrix: Vec<Vec<Option<f64>>>,
}

impl DivergenceReport {
    pub fn correlation(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.groups.iter().position(|g| g == a)?;
        let j = self.groups.iter().position(|g| g == b)?;
        self.matrix[i][j]
    }
}

/// Each group's curator upvote rate on every inventory post from model
/// predictions alone, and the correlation between groups.
pub fn curator_group_divergence<P: Predictor + ?Sized>(
    model: &P,
    inventory: &[&PostRecord],
    groups: &[CuratorGroup],
    confidence_threshold: f64,
) -> Result<DivergenceReport> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("divergence needs at least two curator groups".into()));
    }
    let mut rates = Vec::with_capacity(groups.len());
    for g in groups {
        if g.curators.is_empty() {
            return Err(Error::InvalidArgument(format!("curator group {} is empty", g.name)));
        }
        let mut row = Vec::with_capacity(inventory.len());
        for post in inventory {
            row.push(curator_upvote_rate(post, |_| None, model, &g.curators, confidence_threshold)?.0);
        }
        rates.push(row);
    }
    let matrix = (0..groups.len())
        .map(|i| {
            (0..groups.len())
                .map(|j| {
                    let r = pearson(&rates[i], &rates[j]);
                    if i == j { r.map(|_| 1.0) } else { r }
                })
                .collect()
        })
        .collect();
    Ok(DivergenceReport {
        groups: groups.iter().map(|g| g.name.clone()).collect(),
        posts: inventory.iter().map(|p| p.post_id.clone()).collect(),
        rates,
        matrix,
    })
}

/// Spearman correlation between two rankings of the same posts.
pub fn feed_rank_correlation(a: &[FeedEntry], b: &[FeedEntry]) -> Result<Option<f64>> {
    let pos_b: HashMap<&str, usize> = b.iter().enumerate().map(|(i, e)| (e.post_id.as_str(), i)).collect();
    if a.len() != b.len() || pos_b.len() != b.len() || a.iter().any(|e| !pos_b.contains_key(e.post_id.as_str())) {
        return Err(Error::InvalidArgument("feeds do not rank the same posts".into()));
    }
    let xs: Vec<f64> = (0..a.len()).map(|i| i as f64).collect();
    let ys: Vec<f64> = a.iter().map(|e| pos_b[e.post_id.as_str()] as f64).collect();
    Ok(spearman(&xs, &ys))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepLevel {
    pub threshold: f64,
    pub frontstage: BTreeSet<String>,
}

impl SweepLevel {
    pub fn size(&self) -> usize {
        self.frontstage.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rates: BTreeMap<String, f64>,
    pub levels: Vec<SweepLevel>,
}

/// Frontstage sets for each curation threshold in ascending `thresholds`.
/// `actual` maps (user, post) to a recorded vote.
pub fn threshold_sweep<P: Predictor + ?Sized>(
    model: &P,
    inventory: &[&PostRecord],
    actual: &HashMap<(String, String), Direction>,
    curators: &BTreeSet<String>,
    confidence_threshold: f64,
    thresholds: &[f64],
) -> Result<SweepReport> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::InvalidArgument("sweep thresholds must be sorted ascending".into()));
    }
    let mut rates = BTreeMap::new();
    for post in inventory {
        let (rate, _) = curator_upvote_rate(
            post,
            |u| actual.get(&(u.to_string(), post.post_id.clone())).copied(),
            model,
            curators,
            confidence_threshold,
        )?;
        rates.insert(post.post_id.clone(), rate);
    }
    let levels = thresholds
        .iter()
        .map(|&t| SweepLevel {
            threshold: t,
            frontstage: rates
                .iter()
                .filter(|(_, &r)| route_post(r, t) == Stage::Frontstage)
                .map(|(id, _)| id.clone())
                .collect(),
        })
        .collect();
    Ok(SweepReport { rates, levels })
}

/// Latest vote per (user, post).
pub fn actual_votes<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>) -> HashMap<(String, String), Direction> {
    let mut latest: HashMap<(String, String), &VoteRecord> = HashMap::new();
    for v in votes {
        let key = (v.user_id.clone(), v.post_id.clone());
        match latest.get(&key) {
            Some(old) if old.voted_at > v.voted_at => {}
            _ => {
                latest.insert(key, v);
            }
        }
    }
    latest.into_iter().map(|(k, v)| (k, v.direction)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Prediction;
    use chrono::Utc;
    use proptest::prelude::*;

    struct ByAuthor;

    /// p is 0.9 when the user's first letter matches the post text.
    impl Predictor for ByAuthor {
        fn predict_at(&self, user: &str, post: &PostRecord, threshold: f64) -> Prediction {
            let p = if post.text.starts_with(&user[..1]) { 0.9 } else { 0.1 };
            Prediction::new(p, threshold, false)
        }
    }

    fn post(id: &str, text: &str) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            author_id: "x".into(),
            community: "c".into(),
            created_at: Utc::now(),
            nsfw: false,
            url_domain: String::new(),
            text: text.into(),
        }
    }

    fn users(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn group_selection_boundaries() {
        let t = Utc::now();
        let mut votes = Vec::new();
        let mut cast = |u: &str, c: &str, ups: usize, downs: usize| {
            for i in 0..ups + downs {
                let d = if i < ups { Direction::Up } else { Direction::Down };
                votes.push(VoteRecord::new(u, format!("{c}{u}{i}"), d, t, c));
            }
        };
        cast("keen", "aff", 4, 1);
        cast("keen", "src", 1, 0);
        cast("few", "aff", 4, 0);
        cast("few", "src", 1, 0);
        cast("grumpy", "aff", 3, 2);
        cast("grumpy", "src", 1, 0);
        cast("outsider", "aff", 9, 0);
        let group = select_curator_group(&votes, "src", "aff", 5, 0.7);
        assert_eq!(group, users(&["keen"]));
    }

    #[test]
    fn random_group_is_seeded_and_bounded() {
        let t = Utc::now();
        let votes: Vec<VoteRecord> =
            (0..20).map(|i| VoteRecord::new(format!("u{i}"), "p", Direction::Up, t, "c")).collect();
        let (stats, _) = crate::dataset::compute_stats(&votes);
        let a = random_group(&stats, "c", 5, 9);
        assert_eq!(a.len(), 5);
        assert_eq!(a, random_group(&stats, "c", 5, 9));
        assert_eq!(random_group(&stats, "c", 50, 9).len(), 20);
    }

    #[test]
    fn opposing_groups_diverge() {
        let posts = [post("1", "a1"), post("2", "b2"), post("3", "a3"), post("4", "b4")];
        let inventory: Vec<&PostRecord> = posts.iter().collect();
        let groups = [
            CuratorGroup::new("A", users(&["a1", "a2"])),
            CuratorGroup::new("B", users(&["b1", "b2"])),
            CuratorGroup::new("mixed", users(&["a9", "b9", "c9"])),
        ];
        let r = curator_group_divergence(&ByAuthor, &inventory, &groups, 0.5).unwrap();
        assert_eq!(r.correlation("A", "A"), Some(1.0));
        assert!((r.correlation("A", "B").unwrap() + 1.0).abs() < 1e-12);
        assert!(curator_group_divergence(&ByAuthor, &inventory, &groups[..1], 0.5).is_err());
    }

    #[test]
    fn constant_rates_have_no_correlation() {
        let posts = [post("1", "a"), post("2", "a")];
        let inventory: Vec<&PostRecord> = posts.iter().collect();
        let groups = [CuratorGroup::new("A", users(&["a"])), CuratorGroup::new("B", users(&["b"]))];
        let r = curator_group_divergence(&ByAuthor, &inventory, &groups, 0.5).unwrap();
        assert_eq!(r.matrix[0][1], None);
        assert_eq!(r.matrix[0][0], None);
    }

    fn entries(ids: &[&str]) -> Vec<FeedEntry> {
        ids.iter()
            .map(|id| FeedEntry {
                post_id: id.to_string(),
                score: 0.0,
                created_at: Utc::now(),
                stage: None,
            })
            .collect()
    }

    #[test]
    fn rank_correlation_examples() {
        let a = entries(&["x", "y", "z"]);
        assert_eq!(feed_rank_correlation(&a, &a).unwrap(), Some(1.0));
        let rev = entries(&["z", "y", "x"]);
        assert_eq!(feed_rank_correlation(&a, &rev).unwrap(), Some(-1.0));
        assert!(feed_rank_correlation(&a, &entries(&["x", "y", "w"])).is_err());
        assert!(feed_rank_correlation(&a, &entries(&["x", "y"])).is_err());
    }

    #[test]
    fn sweep_extremes() {
        let posts = [post("1", "a"), post("2", "b")];
        let inventory: Vec<&PostRecord> = posts.iter().collect();
        let r = threshold_sweep(&ByAuthor, &inventory, &HashMap::new(), &users(&["a"]), 0.5, &[0.0, 1.0, 1.01]).unwrap();
        assert_eq!(r.levels[0].size(), 2);
        assert_eq!(r.levels[1].frontstage, users(&["1"]));
        assert_eq!(r.levels[2].size(), 0);
        assert!(threshold_sweep(&ByAuthor, &inventory, &HashMap::new(), &users(&["a"]), 0.5, &[0.6, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn sweep_sets_are_nested(
            texts in prop::collection::vec("[abc]", 1..30),
            curators in prop::collection::btree_set("[abc][0-9]", 1..8),
            mut thresholds in prop::collection::vec(0.0f64..1.0, 1..6),
        ) {
            thresholds.sort_by(f64::total_cmp);
            let posts: Vec<PostRecord> = texts.iter().enumerate().map(|(i, t)| post(&i.to_string(), t)).collect();
            let inventory: Vec<&PostRecord> = posts.iter().collect();
            let r = threshold_sweep(&ByAuthor, &inventory, &HashMap::new(), &curators, 0.5, &thresholds).unwrap();
            for w in r.levels.windows(2) {
                prop_assert!(w[1].frontstage.is_subset(&w[0].frontstage));
            }
        }
    }
}
