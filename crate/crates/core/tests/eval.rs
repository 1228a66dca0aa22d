mod common;

use common::{post, vote, StubModel};
use cura::dataset::{index_posts, VoteRecord};
use cura::eval::{
    baseline_predictions, metrics, peer_vote_experiment, roc_auc, sample_targets, score_votes,
    similar_peer_experiment, PeerMode, SimilarityIndex, WeightStats,
};
use cura::model::{build_training_vocabulary, Hyperparams, ModelCheckpoint, ModelConfig};
use proptest::prelude::*;

fn corpus() -> (Vec<VoteRecord>, Vec<VoteRecord>, Vec<cura::dataset::PostRecord>) {
    let posts: Vec<_> = (0..12).map(|i| post(&format!("p{i}"), "author", "c", i)).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..16 {
        for (i, p) in posts.iter().enumerate() {
            let v = vote(&format!("u{u:02}"), &p.post_id, (u + i) % 4 != 0, "c", 100);
            if (u * 7 + i) % 5 == 0 { test.push(v) } else { train.push(v) }
        }
    }
    (train, test, posts)
}

#[test]
fn zero_learning_rate_gives_a_flat_curve_at_baseline() {
    let (train, test, posts) = corpus();
    let index = index_posts(posts);
    let config = ModelConfig::miniature();
    let vocab = build_training_vocabulary(&train, &index, &config);
    let hp = Hyperparams { finetune_learning_rate: 0.0, ..Hyperparams::desk() };
    let model = ModelCheckpoint::initialize(config, hp, vocab).unwrap();
    let sample = sample_targets(&test, 20, 5);
    let report = peer_vote_experiment(&model, &index, &WeightStats::from_votes(&train), &sample, 6).unwrap();
    let base = baseline_predictions(&model, &index, &sample);
    let correct = base.iter().zip(&sample.targets).filter(|(p, t)| p.decision == t.vote.direction).count();
    let baseline = correct as f64 / base.len() as f64;
    for point in &report.curve.points {
        assert_eq!(point.accuracy, Some(baseline), "k={}", point.label);
    }
    for trial in &report.trials {
        assert!(trial.p.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn experiments_are_deterministic_under_a_seed() {
    let (train, test, posts) = corpus();
    let index = index_posts(posts);
    let stats = WeightStats::from_votes(&train);
    let model = StubModel::new(0.05);
    let run = |seed| {
        let sample = sample_targets(&test, 15, seed);
        let a = peer_vote_experiment(&model, &index, &stats, &sample, 5).unwrap();
        let sim = SimilarityIndex::new(&train);
        let b = similar_peer_experiment(&model, &index, &stats, &sim, &sample, 5, PeerMode::Adversarial).unwrap();
        serde_json::to_string(&(a, b)).unwrap()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn adversarial_peers_push_the_stub_toward_the_wrong_answer() {
    let (train, test, posts) = corpus();
    let index = index_posts(posts);
    let stats = WeightStats::from_votes(&train);
    let sample = sample_targets(&test, 15, 1);
    let sim = SimilarityIndex::new(&train);
    let model = StubModel::new(0.2);
    let support = similar_peer_experiment(&model, &index, &stats, &sim, &sample, 6, PeerMode::Support).unwrap();
    let adversarial = similar_peer_experiment(&model, &index, &stats, &sim, &sample, 6, PeerMode::Adversarial).unwrap();
    assert_eq!(support.accuracy_at(6), Some(1.0));
    assert_eq!(adversarial.accuracy_at(6), Some(0.0));
    assert!(similar_peer_experiment(&model, &index, &stats, &sim, &sample, 6, PeerMode::Random).is_err());
}

#[test]
fn metrics_cells_and_rates_are_consistent() {
    let (_, test, posts) = corpus();
    let index = index_posts(posts);
    let model = StubModel::new(0.0);
    let scored = score_votes(&model, &test, &index).unwrap();
    let r = metrics(&scored).unwrap();
    let c = &r.confusion;
    assert_eq!(c.up_up + c.up_down + c.down_up + c.down_down, test.len() as u64);
    assert_eq!(r.accuracy, (c.up_up + c.down_down) as f64 / test.len() as f64);
    for row in c.rates() {
        if let [Some(a), Some(b)] = row {
            assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #[test]
    fn auc_ignores_monotone_transforms(samples in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200)) {
        let a = roc_auc(samples.iter().copied());
        let b = roc_auc(samples.iter().map(|&(p, y)| (p * p, y)));
        prop_assert_eq!(a, b);
    }
}
