//! Per-user vote prediction: vocabulary, input serialization, a small
//! transformer encoder, training and online finetuning.

mod checkpoint;
mod config;
mod encoder;
mod online;
mod optim;
mod serialize;
mod shared;
mod train;
mod vocab;
mod weight;

use serde::{Deserialize, Serialize};

pub use checkpoint::{FinetuneOutcome, ModelCheckpoint, FORMAT_VERSION};
pub use config::{FinetuneWeighting, Hyperparams, Init, ModelConfig, Schedule};
pub use encoder::{sigmoid, TensorInfo};
pub use online::{online_weight, OnlineModel, Predictor};
pub use serialize::{render_time, serialize_input, SerializedExample, MAX_PREFIX_LEN, METADATA_VALUE_CAP, TARGET_INDEX};
pub use shared::SharedModel;
pub use train::{
    build_training_vocabulary, mean_loss, prepare_examples, train, train_with_progress, TrainReport, TrainingExample,
};
pub use vocab::{build_vocabulary, pre_tokenize, BaseVocab, Feature, Vocabulary};
pub use weight::{class_weight, compute_weight};

use crate::dataset::{Direction, VoteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability of an upvote.
    pub p: f64,
    pub decision: Direction,
    /// Set when the user was not in the training vocabulary.
    pub low_confidence: bool,
}

impl Prediction {
    pub fn new(p: f64, threshold: f64, low_confidence: bool) -> Self {
        let decision = Direction::from_up(p >= threshold);
        Self { p, decision, low_confidence }
    }

    /// Probability assigned to `direction`.
    pub fn probability_of(&self, direction: Direction) -> f64 {
        if direction.is_up() { self.p } else { 1.0 - self.p }
    }
}

/// Predicts the majority direction among `votes`. Ties and empty input
/// predict UP at 0.5.
pub fn majority_baseline<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>) -> Prediction {
    let (mut up, mut total) = (0usize, 0usize);
    for v in votes {
        total += 1;
        up += v.direction.is_up() as usize;
    }
    if total == 0 || 2 * up == total {
        return Prediction::new(0.5, 0.5, false);
    }
    let p = up as f64 / total as f64;
    Prediction::new(p, 0.5, false)
}
