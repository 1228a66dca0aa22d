use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{Direction, PostIndex, VoteRecord};
use crate::error::{Error, Result};
use crate::model::{majority_baseline, Prediction, Predictor};

/// Actual direction in rows, predicted direction in columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub up_up: u64,
    pub up_down: u64,
    pub down_up: u64,
    pub down_down: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, actual: Direction, predicted: Direction) {
        match (actual, predicted) {
            (Direction::Up, Direction::Up) => self.up_up += 1,
            (Direction::Up, Direction::Down) => self.up_down += 1,
            (Direction::Down, Direction::Up) => self.down_up += 1,
            (Direction::Down, Direction::Down) => self.down_down += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.up_up + self.up_down + self.down_up + self.down_down
    }

    pub fn accuracy(&self) -> f64 {
        (self.up_up + self.down_down) as f64 / self.total().max(1) as f64
    }

    /// Recall of upvotes; `None` without actual upvotes.
    pub fn up_recall(&self) -> Option<f64> {
        ratio(self.up_up, self.up_up + self.up_down)
    }

    pub fn down_recall(&self) -> Option<f64> {
        ratio(self.down_down, self.down_up + self.down_down)
    }

    /// Mean of the two recalls.
    pub fn balanced_accuracy(&self) -> Option<f64> {
        Some((self.up_recall()? + self.down_recall()?) / 2.0)
    }

    /// Row-normalized rates `[[up→up, up→down], [down→up, down→down]]`.
    pub fn rates(&self) -> [[Option<f64>; 2]; 2] {
        let up = self.up_up + self.up_down;
        let down = self.down_up + self.down_down;
        [
            [ratio(self.up_up, up), ratio(self.up_down, up)],
            [ratio(self.down_up, down), ratio(self.down_down, down)],
        ]
    }
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct CommunityAccuracy {
    pub community: String,
    pub count: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub count: u64,
    pub accuracy: f64,
    /// `None` when the test set has only one class.
    pub auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub per_community: Vec<CommunityAccuracy>,
}

/// One scored test vote.
#[derive(Debug, Clone)]
pub struct Scored<'a> {
    pub vote: &'a VoteRecord,
    pub prediction: Prediction,
}

pub fn metrics(scored: &[Scored]) -> Result<MetricsReport> {
    if scored.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut confusion = ConfusionMatrix::default();
    let mut by_community: BTreeMap<&str, ConfusionMatrix> = BTreeMap::new();
    for s in scored {
        confusion.add(s.vote.direction, s.prediction.decision);
        by_community
            .entry(&s.vote.community)
            .or_default()
            .add(s.vote.direction, s.prediction.decision);
    }
    let auc = roc_auc(scored.iter().map(|s| (s.prediction.p, s.vote.direction.is_up())));
    Ok(MetricsReport {
        count: confusion.total(),
        accuracy: confusion.accuracy(),
        auc,
        confusion,
        per_community: by_community
            .into_iter()
            .map(|(c, m)| CommunityAccuracy {
                community: c.to_string(),
                count: m.total(),
                accuracy: m.accuracy(),
            })
            .collect(),
    })
}

/// Scores every test vote at threshold 0.5. Votes whose post is missing
/// from `posts` are an error.
pub fn score_votes<'a, P: Predictor + ?Sized>(
    model: &P,
    test: &'a [VoteRecord],
    posts: &PostIndex,
) -> Result<Vec<Scored<'a>>> {
    test.iter()
        .map(|vote| {
            let post = posts
                .get(&vote.post_id)
                .ok_or_else(|| Error::NotFound(format!("post {} for test vote", vote.post_id)))?;
            Ok(Scored {
                vote,
                prediction: model.predict_at(&vote.user_id, post, 0.5),
            })
        })
        .collect()
}

pub fn eval_accuracy<P: Predictor + ?Sized>(model: &P, test: &[VoteRecord], posts: &PostIndex) -> Result<MetricsReport> {
    metrics(&score_votes(model, test, posts)?)
}

/// Majority-vote predictions: each test vote is predicted from every other
/// vote on its post in `context`.
pub struct MajorityContext<'a> {
    by_post: std::collections::HashMap<&'a str, Vec<&'a VoteRecord>>,
}

impl<'a> MajorityContext<'a> {
    pub fn new(context: impl IntoIterator<Item = &'a VoteRecord>) -> Self {
        let mut by_post: std::collections::HashMap<&str, Vec<&VoteRecord>> = std::collections::HashMap::new();
        for v in context {
            by_post.entry(v.post_id.as_str()).or_default().push(v);
        }
        Self { by_post }
    }

    pub fn predict(&self, target: &VoteRecord) -> Prediction {
        let others = self
            .by_post
            .get(target.post_id.as_str())
            .into_iter()
            .flatten()
            .copied()
            .filter(|v| v.user_id != target.user_id);
        majority_baseline(others)
    }

    /// Fraction of votes on the target's post (the target included) that
    /// share its direction.
    pub fn agreement(&self, target: &VoteRecord) -> f64 {
        let mut same = 1u64;
        let mut total = 1u64;
        for v in self.by_post.get(target.post_id.as_str()).into_iter().flatten() {
            if v.user_id == target.user_id {
                continue;
            }
            total += 1;
            same += (v.direction == target.direction) as u64;
        }
        same as f64 / total as f64
    }

    pub fn score<'t>(&self, test: &'t [VoteRecord]) -> Vec<Scored<'t>> {
        test.iter()
            .map(|vote| Scored {
                vote,
                prediction: self.predict(vote),
            })
            .collect()
    }
}

/// Area under the ROC curve with upvotes as positives, by the rank-sum
/// formula with midranks for ties.
pub fn roc_auc(samples: impl IntoIterator<Item = (f64, bool)>) -> Option<f64> {
    let mut s: Vec<(f64, bool)> = samples.into_iter().collect();
    let pos = s.iter().filter(|x| x.1).count();
    let neg = s.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < s.len() {
        let mut j = i;
        while j < s.len() && s[j].0 == s[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their mean.
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * s[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let pos = pos as f64;
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;
    use proptest::prelude::*;

    fn brute_auc(s: &[(f64, bool)]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for a in s.iter().filter(|x| x.1) {
            for b in s.iter().filter(|x| !x.1) {
                pairs += 1.0;
                wins += if a.0 > b.0 {
                    1.0
                } else if a.0 == b.0 {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_and_constant_scores() {
        let perfect = [(0.9, true), (0.8, true), (0.1, false), (0.3, false)];
        assert_eq!(roc_auc(perfect), Some(1.0));
        let constant = [(0.5, true), (0.5, false), (0.5, true)];
        assert_eq!(roc_auc(constant), Some(0.5));
        assert_eq!(roc_auc([(0.2, true)]), None);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_count(s in prop::collection::vec((0u8..6, any::<bool>()), 2..60)) {
            let s: Vec<(f64, bool)> = s.into_iter().map(|(p, y)| (p as f64 / 5.0, y)).collect();
            if let Some(auc) = roc_auc(s.iter().copied()) {
                prop_assert!((auc - brute_auc(&s)).abs() < 1e-12);
                let squared = roc_auc(s.iter().map(|&(p, y)| (p * p, y))).unwrap();
                prop_assert!((auc - squared).abs() < 1e-12);
            }
        }

        #[test]
        fn accuracy_agrees_with_confusion(pairs in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..80)) {
            let votes: Vec<VoteRecord> = pairs
                .iter()
                .enumerate()
                .map(|(i, &(up, _))| VoteRecord::new(format!("u{i}"), "p", Direction::from_up(up), Utc::now(), "c"))
                .collect();
            let scored: Vec<Scored> = votes
                .iter()
                .zip(&pairs)
                .map(|(vote, &(_, p))| Scored { vote, prediction: Prediction::new(p, 0.5, false) })
                .collect();
            let r = metrics(&scored).unwrap();
            let direct = scored.iter().filter(|s| s.prediction.decision == s.vote.direction).count() as f64
                / scored.len() as f64;
            prop_assert_eq!(r.accuracy, direct);
            prop_assert_eq!(r.confusion.total(), scored.len() as u64);
            for row in r.confusion.rates() {
                if let [Some(a), Some(b)] = row {
                    prop_assert!((a + b - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn majority_excludes_the_target() {
        let v = |u: &str, d| VoteRecord::new(u, "p", d, Utc::now(), "c");
        let ctx = [v("a", Direction::Up), v("b", Direction::Up), v("c", Direction::Down)];
        let m = MajorityContext::new(&ctx);
        // Without a's own vote the others tie, which predicts UP.
        assert_eq!(m.predict(&ctx[0]).decision, Direction::Up);
        assert_eq!(m.predict(&ctx[2]).decision, Direction::Up);
        assert!((m.agreement(&ctx[2]) - 1.0 / 3.0).abs() < 1e-12);
        let lone = v("z", Direction::Down);
        let single = MajorityContext::new([&lone]);
        assert_eq!(single.agreement(&lone), 1.0);
    }

    #[test]
    fn empty_test_set_is_an_error() {
        assert!(metrics(&[]).is_err());
    }
}
