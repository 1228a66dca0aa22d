//! Accuracy, AUC, confusion matrix and the activity and agreement curves,
//! next to the majority-vote baseline.

use cura::dataset::{build_balanced_test, compute_stats, index_posts, split_dataset, synth_generate, SplitMode, SynthConfig};
use cura::eval::{accuracy_by_agreement, accuracy_by_user_activity, metrics, score_votes, MajorityContext, DEFAULT_ACTIVITY_BINS};
use cura::model::{train, Hyperparams, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let split = split_dataset(&corpus.votes, 0.8, SplitMode::ByVote, 0)?;
    let (model, _) = train(&split.train, &posts, ModelConfig::desk(), Hyperparams::desk())?;

    let test = build_balanced_test(&split.test, 0);
    let scored = score_votes(&model, &test, &posts)?;
    let report = metrics(&scored)?;
    let context = MajorityContext::new(&corpus.votes);
    let baseline = metrics(&context.score(&test))?;
    println!("model    accuracy {:.4}  auc {:?}", report.accuracy, report.auc);
    println!("baseline accuracy {:.4}  auc {:?}", baseline.accuracy, baseline.auc);
    println!("confusion {:?}", report.confusion);

    let (train_users, _) = compute_stats(&split.train);
    let activity = accuracy_by_user_activity(&scored, &train_users, &DEFAULT_ACTIVITY_BINS)?;
    for p in activity.points.iter().filter(|p| p.count > 0) {
        println!("activity {:>6}: {:>4} votes, accuracy {:?}", p.label, p.count, p.accuracy);
    }
    let agreement = accuracy_by_agreement(&scored, &context, 5)?;
    for p in &agreement.curve.points {
        println!("agreement {:>9}: {:>4} votes, accuracy {:?}", p.label, p.count, p.accuracy);
    }
    println!("minority votes: {:?}", agreement.minority);
    Ok(())
}
