use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::serialize::MAX_PREFIX_LEN;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum Init {
    /// Fresh weights drawn from N(0, 0.02).
    #[default]
    Random,
    /// Copy encoder weights from an existing checkpoint with matching
    /// dimensions; base-token embeddings are matched by token string.
    PretrainedSmall(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub intermediate: usize,
    pub max_len: usize,
    pub init: Init,
    /// Standard deviation of the random weight init.
    pub init_std: f64,
    /// Dropout rate during training; prediction and finetune steps never
    /// drop.
    pub dropout: f64,
    /// Width of an optional tanh layer between the target-user encoding and
    /// the linear projector. Zero projects the encoding directly.
    pub head_width: usize,
    /// Word entries kept in the base vocabulary, most frequent first.
    pub vocab_max_words: usize,
    /// Minimum corpus count for a word to get its own entry.
    pub vocab_min_count: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden: 256,
            heads: 4,
            intermediate: 1024,
            max_len: 512,
            init: Init::Random,
            init_std: 0.02,
            dropout: 0.1,
            head_width: 0,
            vocab_max_words: 30_000,
            vocab_min_count: 1,
        }
    }
}

impl ModelConfig {
    /// Two layers of width 32; small enough for finite-difference checks.
    pub fn miniature() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            heads: 2,
            intermediate: 64,
            max_len: 64,
            ..Self::default()
        }
    }

    /// The miniature shape without dropout; trains from scratch on a
    /// laptop in a couple of minutes.
    pub fn desk() -> Self {
        Self {
            dropout: 0.0,
            ..Self::miniature()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.heads == 0 || self.intermediate == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::InvalidArgument(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::InvalidArgument(format!("init_std must be positive, got {}", self.init_std)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.max_len <= MAX_PREFIX_LEN {
            return Err(Error::InvalidArgument(format!(
                "max_len {} must exceed the longest metadata prefix ({MAX_PREFIX_LEN})",
                self.max_len
            )));
        }
        Ok(())
    }
}

/// How the single-example finetune step weights its loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneWeighting {
    /// Vote weight recomputed from statistics that include the new vote.
    #[default]
    Recomputed,
    /// Weight 1.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub finetune_learning_rate: f64,
    /// Loss multiplier for downvotes; upvotes use 1.
    pub downvote_weight: f64,
    pub seed: u64,
    pub finetune_weighting: FinetuneWeighting,
    pub schedule: Schedule,
    /// Decoupled weight decay on weight matrices and embeddings.
    pub weight_decay: f64,
    /// Fraction of training steps spent warming up linearly from zero.
    pub warmup_fraction: f64,
}

/// Learning-rate schedule for training (finetune steps always use the
/// fixed finetune rate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Decays linearly to zero at the last step.
    #[default]
    Linear,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 3e-5,
            finetune_learning_rate: 3.6e-5,
            downvote_weight: 1.5,
            seed: 0,
            finetune_weighting: FinetuneWeighting::Recomputed,
            schedule: Schedule::Linear,
            weight_decay: 0.0,
            warmup_fraction: 0.0,
        }
    }
}

impl Hyperparams {
    /// Settings for training [`ModelConfig::desk`] from random
    /// initialization. The default rates assume a pretrained encoder and
    /// leave a small random one stuck near the class prior.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            finetune_learning_rate: 3e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("downvote_weight", self.downvote_weight)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        // A zero finetune rate turns online learning off.
        for (name, v) in [
            ("finetune_learning_rate", self.finetune_learning_rate),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::InvalidArgument(format!(
                "warmup_fraction must be in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }

    /// Learning rate for `step` (0-based) out of `total` training steps.
    pub fn learning_rate_at(&self, step: u64, total: u64) -> f64 {
        let total = total.max(1) as f64;
        let t = step as f64;
        let warmup = (self.warmup_fraction * total).floor();
        if t < warmup {
            return self.learning_rate * (t + 1.0) / warmup;
        }
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Linear => self.learning_rate * (total - t) / (total - warmup),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_training_setup() {
        let hp = Hyperparams::default();
        assert_eq!(hp.epochs, 10);
        assert_eq!(hp.batch_size, 64);
        assert_eq!(hp.learning_rate, 3e-5);
        assert_eq!(hp.finetune_learning_rate, 3.6e-5);
        assert_eq!(hp.downvote_weight, 1.5);
        assert_eq!(ModelConfig::default().max_len, 512);
        hp.validate().unwrap();
        ModelConfig::default().validate().unwrap();
        ModelConfig::miniature().validate().unwrap();
    }

    #[test]
    fn rejects_short_max_len_and_bad_heads() {
        let short = ModelConfig { max_len: MAX_PREFIX_LEN, ..ModelConfig::miniature() };
        assert!(short.validate().is_err());
        let heads = ModelConfig { heads: 3, ..ModelConfig::miniature() };
        assert!(heads.validate().is_err());
        let hp = Hyperparams { learning_rate: 0.0, ..Hyperparams::default() };
        assert!(hp.validate().is_err());
    }

    #[test]
    fn linear_schedule_decays_to_the_last_step() {
        let hp = Hyperparams { learning_rate: 1.0, ..Hyperparams::default() };
        assert_eq!(hp.learning_rate_at(0, 4), 1.0);
        assert_eq!(hp.learning_rate_at(3, 4), 0.25);
        let warm = Hyperparams { warmup_fraction: 0.5, ..hp.clone() };
        assert_eq!(warm.learning_rate_at(0, 4), 0.5);
        assert_eq!(warm.learning_rate_at(1, 4), 1.0);
        assert_eq!(warm.learning_rate_at(3, 4), 0.5);
        let flat = Hyperparams { schedule: Schedule::Constant, ..hp };
        assert_eq!(flat.learning_rate_at(3, 4), 1.0);
    }

    #[test]
    fn config_from_toml_fills_defaults() {
        let c: ModelConfig = toml::from_str("layers = 2\nhidden = 64\n").unwrap();
        assert_eq!(c.layers, 2);
        assert_eq!(c.max_len, 512);
        let c: ModelConfig = toml::from_str("init = { kind = \"pretrained_small\", path = \"x.ckpt\" }").unwrap();
        assert_eq!(c.init, Init::PretrainedSmall("x.ckpt".into()));
    }
}
