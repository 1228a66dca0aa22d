//! Evaluation battery: held-out metrics, accuracy curves, peer-vote
//! finetuning experiments, curator-group divergence and threshold sweeps.

mod curves;
mod divergence;
mod metrics;
mod pairs;
mod peer;
mod run;
mod stats;

pub use curves::{
    accuracy_by_agreement, accuracy_by_user_activity, AgreementReport, CurvePoint, CurveReport, Tally,
    DEFAULT_ACTIVITY_BINS,
};
pub use divergence::{
    actual_votes, curator_group_divergence, feed_rank_correlation, random_group, select_curator_group,
    threshold_sweep, CuratorGroup, DivergenceReport, SweepLevel, SweepReport, DEFAULT_GROUP_MIN_UP_RATE,
    DEFAULT_GROUP_MIN_VOTES, DEFAULT_RANDOM_GROUP_SIZE,
};
pub use metrics::{
    eval_accuracy, metrics, roc_auc, score_votes, CommunityAccuracy, ConfusionMatrix, MajorityContext, MetricsReport,
    Scored,
};
pub use pairs::{render_feed, study_feed_pairs, FeedPair, FeedPairConfig, FeedPairSettings, FeedSpec, RenderedFeed};
pub use peer::{
    baseline_predictions, cosine_similarity, peer_vote_experiment, sample_targets, similar_peer_experiment,
    voting_vectors, votes_to_reach, PeerExperimentReport, PeerMode, SimilarityIndex, Target, TargetSample,
    TrialTrace, VotingVector, WeightStats,
};
pub use run::{Manifest, RunDir, MANIFEST_FILE};
pub use stats::{average_ranks, pearson, spearman, trend_test, TrendTest};
