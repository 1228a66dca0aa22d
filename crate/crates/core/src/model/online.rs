use super::checkpoint::{FinetuneOutcome, ModelCheckpoint};
use super::config::{FinetuneWeighting, Hyperparams};
use super::weight::compute_weight;
use super::Prediction;
use crate::dataset::{PostRecord, PostVoteStats, UserStats, VoteRecord};
use crate::error::Result;

/// Anything that scores (user, post) pairs. The feed engine and the
/// experiments are written against this so tests can substitute stubs.
pub trait Predictor {
    /// Probability that `user` upvotes `post`, decided at `threshold`.
    fn predict_at(&self, user: &str, post: &PostRecord, threshold: f64) -> Prediction;
}

/// A predictor that can also learn from one vote at a time.
pub trait OnlineModel: Predictor {
    fn finetune(&mut self, vote: &VoteRecord, post: &PostRecord, weight: f64) -> FinetuneOutcome;
    fn hyperparams(&self) -> &Hyperparams;
    /// Changes whenever the parameters change.
    fn fingerprint(&self) -> String;
}

impl Predictor for ModelCheckpoint {
    fn predict_at(&self, user: &str, post: &PostRecord, threshold: f64) -> Prediction {
        self.predict_with_threshold(user, post, threshold)
    }
}

impl OnlineModel for ModelCheckpoint {
    fn finetune(&mut self, vote: &VoteRecord, post: &PostRecord, weight: f64) -> FinetuneOutcome {
        let lr = ModelCheckpoint::hyperparams(self).finetune_learning_rate;
        self.finetune_step(vote, post, weight, lr)
    }

    fn hyperparams(&self) -> &Hyperparams {
        ModelCheckpoint::hyperparams(self)
    }

    fn fingerprint(&self) -> String {
        self.digest()
    }
}

/// Loss weight for an online step. `user_stats` and `post_stats` must
/// already include `vote`.
pub fn online_weight(
    vote: &VoteRecord,
    user_stats: &UserStats,
    post_stats: &PostVoteStats,
    hyperparams: &Hyperparams,
) -> Result<f64> {
    match hyperparams.finetune_weighting {
        FinetuneWeighting::Recomputed => compute_weight(vote, user_stats, post_stats, hyperparams.downvote_weight),
        FinetuneWeighting::Unit => Ok(1.0),
    }
}
