//! Train the desk-scale encoder on a synthetic corpus, save it and reload it.

use cura::dataset::{build_balanced_test, index_posts, split_dataset, synth_generate, SplitMode, SynthConfig};
use cura::eval::{eval_accuracy, MajorityContext};
use cura::model::{train_with_progress, Hyperparams, ModelCheckpoint, ModelConfig};

fn main() -> cura::Result<()> {
    let corpus = synth_generate(&SynthConfig { users_per_group: 30, posts: 120, votes_per_user: 60, ..SynthConfig::default() })?;
    let posts = index_posts(corpus.posts.clone());
    let split = split_dataset(&corpus.votes, 0.8, SplitMode::ByVote, 0)?;

    let hyperparams = Hyperparams::desk();
    let (model, report) = train_with_progress(&split.train, &posts, ModelConfig::desk(), hyperparams, |epoch, loss, _| {
        println!("epoch {epoch}: loss {loss:.5}");
    })?;
    println!("{} parameters, vocabulary of {}", report.parameters, report.vocab_size);

    let path = std::env::temp_dir().join("cura-example.ckpt");
    model.save(&path)?;
    let reloaded = ModelCheckpoint::load(&path)?;
    assert_eq!(reloaded.digest(), model.digest());

    let test = build_balanced_test(&split.test, 0);
    let accuracy = eval_accuracy(&reloaded, &test, &posts)?;
    let baseline = MajorityContext::new(&corpus.votes).score(&test);
    let baseline = cura::eval::metrics(&baseline)?;
    println!("balanced test accuracy {:.4} (majority baseline {:.4})", accuracy.accuracy, baseline.accuracy);
    println!("checkpoint {} sha256 {}", path.display(), reloaded.digest());
    Ok(())
}
