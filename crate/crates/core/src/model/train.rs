use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::ModelCheckpoint;
use super::encoder::Dropout;
use super::config::{Hyperparams, ModelConfig};
use super::optim::Adam;
use super::serialize::{render_time, SerializedExample};
use super::vocab::{build_vocabulary, BaseVocab, Vocabulary};
use super::weight::compute_weight;
use crate::dataset::{compute_stats, PostIndex, VoteRecord};
use crate::error::{Error, Result};

/// A serialized vote ready for the loss.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub example: SerializedExample,
    pub label: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub examples: usize,
    /// Training votes without post metadata; counted in the weighting
    /// statistics but not trained on.
    pub skipped_orphans: usize,
    pub vocab_size: usize,
    pub parameters: usize,
    pub initial_loss: f64,
    /// Mean batch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub steps: u64,
}

/// Base vocabulary over the posts the votes touch, plus a token for every
/// voter and author.
pub fn build_training_vocabulary(votes: &[VoteRecord], posts: &PostIndex, config: &ModelConfig) -> Vocabulary {
    let touched: BTreeSet<&str> = votes
        .iter()
        .filter(|v| posts.contains_key(&v.post_id))
        .map(|v| v.post_id.as_str())
        .collect();
    let touched: Vec<_> = touched.into_iter().map(|id| &posts[id]).collect();

    let times: Vec<String> = touched.iter().map(|p| render_time(p)).collect();
    let texts = touched
        .iter()
        .map(|p| p.text.as_str())
        .chain(times.iter().map(String::as_str))
        .chain(["true", "false"]);
    let wholes = touched
        .iter()
        .flat_map(|p| [p.community.as_str(), p.url_domain.as_str()])
        .chain(times.iter().map(String::as_str));
    let base = BaseVocab::build(texts, wholes, config.vocab_max_words, config.vocab_min_count);

    let users: BTreeSet<&str> = votes
        .iter()
        .map(|v| v.user_id.as_str())
        .chain(touched.iter().map(|p| p.author_id.as_str()))
        .collect();
    build_vocabulary(users, base)
}

/// Serializes votes that have post metadata and attaches their weights.
/// Weight statistics cover all of `votes`, orphans included.
pub fn prepare_examples(
    votes: &[VoteRecord],
    posts: &PostIndex,
    checkpoint: &ModelCheckpoint,
) -> Result<(Vec<TrainingExample>, usize)> {
    let (user_stats, post_stats) = compute_stats(votes);
    let downvote_weight = checkpoint.hyperparams().downvote_weight;
    let mut examples = Vec::with_capacity(votes.len());
    let mut orphans = 0;
    for vote in votes {
        let Some(post) = posts.get(&vote.post_id) else {
            orphans += 1;
            continue;
        };
        examples.push(TrainingExample {
            example: checkpoint.encode(&vote.user_id, post),
            label: vote.direction.label(),
            weight: compute_weight(vote, &user_stats, &post_stats, downvote_weight)?,
        });
    }
    Ok((examples, orphans))
}

/// Mean weighted loss over `examples`.
pub fn mean_loss(checkpoint: &ModelCheckpoint, examples: &[TrainingExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    examples
        .iter()
        .map(|e| checkpoint.loss(&e.example, e.label, e.weight))
        .sum::<f64>()
        / examples.len() as f64
}

pub fn train(
    votes: &[VoteRecord],
    posts: &PostIndex,
    config: ModelConfig,
    hyperparams: Hyperparams,
) -> Result<(ModelCheckpoint, TrainReport)> {
    train_with_progress(votes, posts, config, hyperparams, |_, _, _| {})
}

/// Trains from scratch; `on_epoch(epoch, mean_loss, checkpoint)` runs after
/// each epoch.
pub fn train_with_progress(
    votes: &[VoteRecord],
    posts: &PostIndex,
    config: ModelConfig,
    hyperparams: Hyperparams,
    mut on_epoch: impl FnMut(usize, f64, &ModelCheckpoint),
) -> Result<(ModelCheckpoint, TrainReport)> {
    let vocab = build_training_vocabulary(votes, posts, &config);
    let mut checkpoint = ModelCheckpoint::initialize(config, hyperparams.clone(), vocab)?;
    let (examples, skipped_orphans) = prepare_examples(votes, posts, &checkpoint)?;
    if examples.is_empty() {
        return Err(Error::Empty("no training votes have post metadata"));
    }

    let initial_loss = mean_loss(&checkpoint, &examples);
    // Vote weights are tiny for active users; rescaling them to mean 1 keeps
    // gradients well above the optimizer's epsilon without moving the optimum.
    let weight_scale = examples.len() as f64 / examples.iter().map(|e| e.weight).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed ^ 0x5eed);
    let decayed = checkpoint
        .tensors()
        .iter()
        .filter(|t| t.shape.len() == 2)
        .map(|t| t.offset..t.offset + t.len())
        .collect();
    let mut optimizer = Adam::new(checkpoint.num_parameters()).with_weight_decay(hyperparams.weight_decay, decayed);
    let mut grads = vec![0.0; checkpoint.num_parameters()];
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(hyperparams.epochs);
    let total_steps = (hyperparams.epochs * examples.len().div_ceil(hyperparams.batch_size)) as u64;
    let mut step = 0u64;
    let dropout_rate = checkpoint.config().dropout;

    for epoch in 0..hyperparams.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyperparams.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = weight_scale / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let e = &examples[i];
                let dropout = Dropout { rng: &mut rng, rate: dropout_rate };
                batch_loss += checkpoint.accumulate_gradient(&e.example, e.label, e.weight * scale, &mut grads, Some(dropout));
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    step: checkpoint.step(),
                    learning_rate: hyperparams.learning_rate,
                    batch_len: batch.len(),
                    detail: format!("epoch {epoch}, batch loss {batch_loss}"),
                });
            }
            let lr = hyperparams.learning_rate_at(step, total_steps);
            checkpoint.apply_update(&mut optimizer, &grads, lr);
            step += 1;
            epoch_loss += batch_loss * batch.len() as f64 / weight_scale;
        }
        let mean = epoch_loss / examples.len() as f64;
        tracing::info!(epoch, loss = mean, "epoch finished");
        on_epoch(epoch, mean, &checkpoint);
        epoch_losses.push(mean);
    }

    let final_loss = mean_loss(&checkpoint, &examples);
    let report = TrainReport {
        examples: examples.len(),
        skipped_orphans,
        vocab_size: checkpoint.vocab().len(),
        parameters: checkpoint.num_parameters(),
        initial_loss,
        epoch_losses,
        final_loss,
        steps: checkpoint.step(),
    };
    Ok((checkpoint, report))
}
