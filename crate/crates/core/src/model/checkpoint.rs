use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Hyperparams, Init, ModelConfig};
use super::encoder::{backward, forward, weighted_bce_with_logit, Dropout, Layout, TensorInfo};
use super::optim::Adam;
use super::serialize::{serialize_input, SerializedExample};
use super::vocab::Vocabulary;
use super::Prediction;
use crate::dataset::{PostRecord, VoteRecord};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CURACKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Encoder and projector parameters with the vocabulary and settings they
/// were trained under.
#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    config: ModelConfig,
    hyperparams: Hyperparams,
    vocab: Vocabulary,
    layout: Layout,
    params: Vec<f64>,
    step: u64,
}

/// Result of a single-vote finetune step.
#[derive(Debug, Clone, PartialEq)]
pub enum FinetuneOutcome {
    Applied { loss_before: f64 },
    /// The gradient was not finite; parameters are untouched.
    Skipped { reason: String },
}

#[derive(Serialize, Deserialize)]
struct TensorRepr {
    name: String,
    offset: usize,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: ModelConfig,
    hyperparams: Hyperparams,
    vocab: Vocabulary,
    step: u64,
    tensors: Vec<TensorRepr>,
}

impl ModelCheckpoint {
    /// Fresh parameters for `vocab`, following `config.init`.
    pub fn initialize(config: ModelConfig, hyperparams: Hyperparams, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        hyperparams.validate()?;
        let layout = Layout::new(&config, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(hyperparams.seed);
        let mut params = layout.init(&mut rng, config.init_std);
        if let Init::PretrainedSmall(path) = &config.init {
            let source = ModelCheckpoint::load(path)?;
            copy_pretrained(&source, &layout, &vocab, &mut params)?;
        }
        Ok(Self {
            config,
            hyperparams,
            vocab,
            layout,
            params,
            step: 0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn set_hyperparams(&mut self, hyperparams: Hyperparams) -> Result<()> {
        hyperparams.validate()?;
        self.hyperparams = hyperparams;
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Direct parameter access, for numerical checks.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn encode(&self, user: &str, post: &PostRecord) -> SerializedExample {
        serialize_input(user, post, &self.vocab, self.config.max_len)
    }

    pub fn logit(&self, example: &SerializedExample) -> f64 {
        forward(&self.layout, &self.config, &self.params, &example.tokens, example.target_index, None).logit
    }

    pub fn probability(&self, example: &SerializedExample) -> f64 {
        super::encoder::sigmoid(self.logit(example))
    }

    /// Probability that `user` upvotes `post`, decided at 0.5.
    pub fn predict(&self, user: &str, post: &PostRecord) -> Prediction {
        self.predict_with_threshold(user, post, 0.5)
    }

    pub fn predict_with_threshold(&self, user: &str, post: &PostRecord, threshold: f64) -> Prediction {
        let ex = self.encode(user, post);
        Prediction::new(self.probability(&ex), threshold, ex.unknown_user)
    }

    /// Predictions for many users on one post.
    pub fn predict_many<'a>(
        &self,
        users: impl IntoIterator<Item = &'a str>,
        post: &PostRecord,
        threshold: f64,
    ) -> Vec<Prediction> {
        users
            .into_iter()
            .map(|u| self.predict_with_threshold(u, post, threshold))
            .collect()
    }

    /// Weighted binary cross-entropy of one example.
    pub fn loss(&self, example: &SerializedExample, label: f64, weight: f64) -> f64 {
        weighted_bce_with_logit(self.logit(example), label, weight)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, example: &SerializedExample, label: f64, weight: f64) -> (f64, Vec<f64>) {
        let mut grads = vec![0.0; self.params.len()];
        let loss = self.accumulate_gradient(example, label, weight, &mut grads, None);
        (loss, grads)
    }

    pub(crate) fn accumulate_gradient(
        &self,
        example: &SerializedExample,
        label: f64,
        weight: f64,
        grads: &mut [f64],
        dropout: Option<Dropout>,
    ) -> f64 {
        let fwd = forward(&self.layout, &self.config, &self.params, &example.tokens, example.target_index, dropout);
        let loss = weighted_bce_with_logit(fwd.logit, label, weight);
        let dlogit = weight * (fwd.probability() - label);
        backward(&self.layout, &self.config, &self.params, &fwd, dlogit, grads);
        loss
    }

    pub(crate) fn apply_update(&mut self, optimizer: &mut Adam, grads: &[f64], lr: f64) {
        optimizer.step(&mut self.params, grads, lr);
        self.step += 1;
    }

    /// One Adam step (fresh moment estimates) on a single vote.
    ///
    /// The vocabulary is never changed; votes from users outside it train
    /// the UNKNOWN_USER embedding.
    pub fn finetune_step(&mut self, vote: &VoteRecord, post: &PostRecord, weight: f64, lr: f64) -> FinetuneOutcome {
        let example = self.encode(&vote.user_id, post);
        let (loss_before, grads) = self.loss_and_gradient(&example, vote.direction.label(), weight);
        if !loss_before.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            let reason = format!("non-finite gradient on {} / {}", vote.user_id, vote.post_id);
            tracing::warn!(%reason, "finetune step skipped");
            return FinetuneOutcome::Skipped { reason };
        }
        if lr == 0.0 {
            return FinetuneOutcome::Applied { loss_before };
        }
        let mut adam = Adam::new(self.params.len());
        self.apply_update(&mut adam, &grads, lr);
        FinetuneOutcome::Applied { loss_before }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            format: "cura-checkpoint".into(),
            version: FORMAT_VERSION,
            config: self.config.clone(),
            hyperparams: self.hyperparams.clone(),
            vocab: self.vocab.clone(),
            step: self.step,
            tensors: self
                .layout
                .tensors
                .iter()
                .map(|t| TensorRepr {
                    name: t.name.clone(),
                    offset: t.offset,
                    shape: t.shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a cura checkpoint".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(read_array(&mut r)?) as usize;
        if header_len > r.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&r[..header_len])?;
        r = &r[header_len..];
        let count = u64::from_le_bytes(read_array(&mut r)?) as usize;
        if r.len() != count * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {count} parameters, found {} bytes",
                r.len()
            )));
        }
        let params: Vec<f64> = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        header.config.validate()?;
        let layout = Layout::new(&header.config, header.vocab.len());
        if layout.len != params.len() {
            return Err(Error::Checkpoint(format!(
                "layout needs {} parameters, archive has {}",
                layout.len,
                params.len()
            )));
        }
        let same_tensors = layout.tensors.len() == header.tensors.len()
            && layout
                .tensors
                .iter()
                .zip(&header.tensors)
                .all(|(a, b)| a.name == b.name && a.offset == b.offset && a.shape == b.shape);
        if !same_tensors {
            return Err(Error::Checkpoint("tensor table does not match the model config".into()));
        }
        Ok(Self {
            config: header.config,
            hyperparams: header.hyperparams,
            vocab: header.vocab,
            layout,
            params,
            step: header.step,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialized checkpoint, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|_| Error::Checkpoint("truncated archive".into()))
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

/// Copies every same-shaped tensor except the token embedding, then copies
/// token-embedding rows of base tokens present in both vocabularies.
fn copy_pretrained(source: &ModelCheckpoint, layout: &Layout, vocab: &Vocabulary, params: &mut [f64]) -> Result<()> {
    if source.config.hidden != layout.tok.cols {
        return Err(Error::Checkpoint(format!(
            "pretrained width {} differs from configured width {}",
            source.config.hidden, layout.tok.cols
        )));
    }
    let mut copied = 0;
    for t in &layout.tensors {
        if t.name == "embeddings.token" {
            continue;
        }
        if let Some(src) = source.layout.tensor(&t.name) {
            if src.shape == t.shape {
                params[t.offset..t.offset + t.len()]
                    .copy_from_slice(&source.params[src.offset..src.offset + src.len()]);
                copied += 1;
            }
        }
    }
    let d = layout.tok.cols;
    for (id, token) in vocab.base().tokens().iter().enumerate() {
        if let Some(src_id) = source.vocab.base().get(token) {
            let dst = layout.tok.off + id * d;
            let from = source.layout.tok.off + src_id as usize * d;
            params[dst..dst + d].copy_from_slice(&source.params[from..from + d]);
        }
    }
    tracing::info!(tensors = copied, "initialized from pretrained checkpoint");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Direction;
    use crate::model::vocab::{build_vocabulary, BaseVocab};
    use chrono::TimeZone;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn post() -> PostRecord {
        PostRecord {
            post_id: "p1".into(),
            author_id: "bob".into(),
            community: "News".into(),
            created_at: chrono::Utc.with_ymd_and_hms(2023, 11, 6, 12, 0, 0).unwrap(),
            nsfw: false,
            url_domain: "example.org".into(),
            text: "river levels rise after storm".into(),
        }
    }

    fn checkpoint(config: ModelConfig) -> ModelCheckpoint {
        let p = post();
        let base = BaseVocab::build([p.text.as_str(), "true", "false"], ["News", "example.org"], 100, 1);
        let vocab = build_vocabulary(["alice", "bob"], base);
        ModelCheckpoint::initialize(config, Hyperparams::default(), vocab).unwrap()
    }

    fn vote(user: &str, d: Direction) -> VoteRecord {
        VoteRecord::new(user, "p1", d, chrono::Utc::now(), "News")
    }

    fn gradient_check(config: ModelConfig) {
        let mut ck = checkpoint(config);
        // Larger weights than the default init make every path carry signal.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in ck.parameters_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let ex = ck.encode("alice", &post());
        let (label, weight) = (1.0, 1.5);
        let (_, grads) = ck.loss_and_gradient(&ex, label, weight);

        let n = ck.num_parameters();
        let mut idx: Vec<usize> = (0..n).filter(|&i| grads[i] != 0.0).collect();
        idx.shuffle(&mut rng);
        idx.truncate(600);
        let h = 1e-5;
        let (mut diff2, mut norm2) = (0.0, 0.0);
        for &i in &idx {
            let orig = ck.params[i];
            ck.params[i] = orig + h;
            let lp = ck.loss(&ex, label, weight);
            ck.params[i] = orig - h;
            let lm = ck.loss(&ex, label, weight);
            ck.params[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grads[i]).abs() / (fd.abs() + grads[i].abs()).max(1e-6);
            assert!(rel < 1e-3, "param {i}: analytic {} numeric {fd}", grads[i]);
            diff2 += (fd - grads[i]).powi(2);
            norm2 += fd.powi(2) + grads[i].powi(2);
        }
        assert!(idx.len() > 100);
        assert!((diff2 / norm2).sqrt() < 1e-4);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        gradient_check(ModelConfig::miniature());
    }

    #[test]
    fn gradient_with_head_layer_matches_finite_differences() {
        gradient_check(ModelConfig { head_width: 8, ..ModelConfig::miniature() });
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ck = checkpoint(ModelConfig::miniature());
        let back = ModelCheckpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.digest(), ck.digest());
        let a = ck.predict("alice", &post()).p;
        let b = back.predict("alice", &post()).p;
        assert_eq!(a.to_bits(), b.to_bits());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        assert_eq!(ModelCheckpoint::load(&path).unwrap().digest(), ck.digest());
    }

    #[test]
    fn corrupt_archives_are_rejected() {
        let bytes = checkpoint(ModelConfig::miniature()).to_bytes();
        assert!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelCheckpoint::from_bytes(b"NOTACKPT").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(ModelCheckpoint::from_bytes(&wrong_version).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let mut ck = checkpoint(ModelConfig::miniature());
        let before = ck.digest();
        let out = ck.finetune_step(&vote("alice", Direction::Up), &post(), 1.0, 0.0);
        assert!(matches!(out, FinetuneOutcome::Applied { .. }));
        assert_eq!(ck.digest(), before);
    }

    #[test]
    fn finetune_moves_prediction_toward_the_vote() {
        let mut ck = checkpoint(ModelConfig::miniature());
        for (d, up) in [(Direction::Up, true), (Direction::Down, false)] {
            let before = ck.predict("alice", &post()).p;
            ck.finetune_step(&vote("alice", d), &post(), 1.0, 1e-3);
            let after = ck.predict("alice", &post()).p;
            assert_eq!(after > before, up, "{before} -> {after}");
        }
    }

    #[test]
    fn non_finite_weight_skips_the_step() {
        let mut ck = checkpoint(ModelConfig::miniature());
        let before = ck.digest();
        let out = ck.finetune_step(&vote("alice", Direction::Up), &post(), f64::NAN, 1e-3);
        assert!(matches!(out, FinetuneOutcome::Skipped { .. }));
        assert_eq!(ck.digest(), before);
    }

    #[test]
    fn unknown_users_are_low_confidence() {
        let ck = checkpoint(ModelConfig::miniature());
        assert!(ck.predict("zed", &post()).low_confidence);
        assert!(!ck.predict("alice", &post()).low_confidence);
    }
}
