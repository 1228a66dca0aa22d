//! Command-line front end. Every verb reads and writes plain files; the
//! evaluation verbs write a run directory with a manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::admin::{self, ServiceConfig};
use crate::dataset::{
    build_balanced_test, load_corpus, load_votes, split_dataset, synth_generate, write_posts, write_votes, PostIndex,
    SplitMode, SynthConfig, VoteRecord,
};
use crate::eval::{
    accuracy_by_agreement, accuracy_by_user_activity, actual_votes, curator_group_divergence, metrics,
    peer_vote_experiment, random_group, render_feed, sample_targets, score_votes, select_curator_group,
    similar_peer_experiment, study_feed_pairs, threshold_sweep, trend_test, votes_to_reach, CuratorGroup,
    CurveReport, FeedPairConfig, MajorityContext, Manifest, PeerExperimentReport, PeerMode, RunDir,
    SimilarityIndex, WeightStats, DEFAULT_ACTIVITY_BINS, DEFAULT_GROUP_MIN_UP_RATE, DEFAULT_GROUP_MIN_VOTES,
    DEFAULT_RANDOM_GROUP_SIZE,
};
use crate::model::{train_with_progress, Hyperparams, ModelCheckpoint, ModelConfig};

#[derive(Debug, Parser)]
#[command(name = "cura", version, about = "Community curation engine and evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus, collapse repeated votes and write clean copies.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with planted voter groups.
    Synth(SynthArgs),
    /// Split votes into train and test sets.
    Split(SplitArgs),
    /// Train a vote-prediction checkpoint.
    Train(TrainArgs),
    /// Accuracy, AUC, confusion matrix and accuracy curves.
    Eval(EvalArgs),
    /// Finetune on peer votes one at a time and track a target prediction.
    PeerExp(PeerArgs),
    /// Like peer-exp with synthetic votes from the most similar users.
    SimilarExp(SimilarArgs),
    /// Correlation of curator upvote rates between curator groups.
    Divergence(DivergenceArgs),
    /// Frontstage sets across curation thresholds.
    Sweep(SweepArgs),
    /// Run the admin HTTP service.
    Serve(ServeArgs),
    /// Write the fifteen study feed-pair definitions, optionally rendered.
    FeedPairs(FeedPairsArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file of generator settings; omitted keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    ByVote,
    ByPost,
}

impl From<SplitArg> for SplitMode {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::ByVote => SplitMode::ByVote,
            SplitArg::ByPost => SplitMode::ByPost,
        }
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, value_enum, default_value_t = SplitArg::ByVote)]
    pub mode: SplitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Small encoder trained from scratch in minutes.
    Desk,
    /// Full-size encoder with the default rates.
    Full,
}

/// Model shape and training settings read from TOML.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub hyperparams: Hyperparams,
}

impl TrainConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => Self {
                model: ModelConfig::desk(),
                hyperparams: Hyperparams::desk(),
            },
            Preset::Full => Self::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output checkpoint; a training report is written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML with `[model]` and `[hyperparams]` tables. Overrides --preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Training votes; the source of activity counts and online weights.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Evaluate on the test set as given instead of a class-balanced draw.
    #[arg(long)]
    pub unbalanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower edges of the activity bins.
    #[arg(long, value_delimiter = ',')]
    pub activity_bins: Option<Vec<u64>>,
    #[arg(long, default_value_t = 10)]
    pub agreement_bins: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the checkpoint's finetune learning rate.
    #[arg(long)]
    pub finetune_lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PeerArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value_t = 10)]
    pub max_peers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SimilarMode {
    Support,
    Adversarial,
    Both,
}

#[derive(Debug, Args)]
pub struct SimilarArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = SimilarMode::Both)]
    pub mode: SimilarMode,
    /// Peer count for the random-peer reference curve.
    #[arg(long, default_value_t = 10)]
    pub reference_peers: usize,
}

#[derive(Debug, Args)]
pub struct DivergenceArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Community whose posts are rated.
    #[arg(long)]
    pub community: String,
    /// `NAME=AFFINITY`: members of the community active and upvoting in
    /// AFFINITY. `NAME=@FILE` reads curator ids, one per line. Repeatable.
    #[arg(long = "group")]
    pub groups: Vec<String>,
    /// Add this many random groups of members.
    #[arg(long, default_value_t = 0)]
    pub random_groups: usize,
    #[arg(long, default_value_t = DEFAULT_RANDOM_GROUP_SIZE)]
    pub random_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub community: String,
    /// File with one curator id per line.
    #[arg(long, conflicts_with = "curated_by")]
    pub curators: Option<PathBuf>,
    /// Select curators from members active and upvoting in this community.
    #[arg(long)]
    pub curated_by: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
    pub thresholds: Vec<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub confidence: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CURA_CONFIG")]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeedPairsArgs {
    /// Where to write the pair definitions (TOML).
    #[arg(long)]
    pub out: PathBuf,
    /// Also render both feeds of every pair into this run directory.
    #[arg(long, requires_all = ["checkpoint", "votes", "posts"])]
    pub render: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub votes: Option<PathBuf>,
    #[arg(long)]
    pub posts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::PeerExp(a) => peer_exp(a),
        Command::SimilarExp(a) => similar_exp(a),
        Command::Divergence(a) => divergence(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
        Command::FeedPairs(a) => feed_pairs(a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (votes, posts, report) = load_corpus(&a.corpus.votes, &a.corpus.posts)?;
    create_dir(&a.out)?;
    write_votes(a.out.join("votes.csv"), &votes)?;
    let mut posts: Vec<_> = posts.into_values().collect();
    posts.sort_by(|x, y| x.post_id.cmp(&y.post_id));
    write_posts(a.out.join("posts.csv"), &posts)?;
    write_json(
        &a.out.join("ingest_report.json"),
        &serde_json::json!({
            "votes_read": report.votes_read,
            "posts_read": report.posts_read,
            "duplicates_collapsed": report.duplicates_collapsed,
            "orphan_votes": report.orphan_count(),
        }),
    )?;
    println!(
        "{} votes ({} duplicates collapsed, {} without post metadata), {} posts",
        votes.len(),
        report.duplicates_collapsed,
        report.orphan_count(),
        posts.len()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => SynthConfig::from_file(path)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let corpus = synth_generate(&config)?;
    create_dir(&a.out)?;
    write_votes(a.out.join("votes.csv"), &corpus.votes)?;
    write_posts(a.out.join("posts.csv"), &corpus.posts)?;
    write_json(&a.out.join("labels.json"), &corpus.labels)?;
    fs::write(a.out.join("synth.toml"), toml::to_string(&config)?)?;
    for g in 0..config.groups {
        let mut members = corpus.labels.group_members(g).join("\n");
        members.push('\n');
        fs::write(a.out.join(format!("group{g}.txt")), members)?;
    }
    println!("{} votes on {} posts by {} users", corpus.votes.len(), corpus.posts.len(), config.users());
    Ok(())
}

fn split(a: SplitArgs) -> Result<()> {
    let votes = load_votes(&a.votes)?;
    let split = split_dataset(&votes, a.ratio, a.mode.into(), a.seed)?;
    let balanced = build_balanced_test(&split.test, a.seed);
    create_dir(&a.out)?;
    write_votes(a.out.join("train.csv"), &split.train)?;
    write_votes(a.out.join("test.csv"), &split.test)?;
    write_votes(a.out.join("balanced_test.csv"), &balanced)?;
    println!(
        "train {} / test {} (balanced {}), {:?} split",
        split.train.len(),
        split.test.len(),
        balanced.len(),
        split.mode
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => {
            let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<TrainConfig>(&raw).with_context(|| format!("parsing {}", path.display()))?
        }
        None => TrainConfig::preset(a.preset),
    };
    if let Some(e) = a.epochs {
        config.hyperparams.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.hyperparams.learning_rate = lr;
    }
    if let Some(s) = a.seed {
        config.hyperparams.seed = s;
    }
    let (votes, posts, _) = load_corpus(&a.corpus.votes, &a.corpus.posts)?;
    let (checkpoint, report) = train_with_progress(
        &votes,
        &posts,
        config.model.clone(),
        config.hyperparams.clone(),
        |epoch, loss, _| println!("epoch {:>3}  loss {loss:.5}", epoch + 1),
    )?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    checkpoint.save(&a.out)?;
    let report_path = a.out.with_extension("report.json");
    write_json(
        &report_path,
        &serde_json::json!({ "config": config, "report": report, "checkpoint_sha256": checkpoint.digest() }),
    )?;
    println!(
        "{} examples, {} parameters, loss {:.5} -> {:.5}; saved {}",
        report.examples,
        report.parameters,
        report.initial_loss,
        report.final_loss,
        a.out.display()
    );
    Ok(())
}

struct Loaded {
    checkpoint: ModelCheckpoint,
    train: Vec<VoteRecord>,
    test: Vec<VoteRecord>,
    posts: PostIndex,
}

fn load_inputs(i: &ModelInputs) -> Result<Loaded> {
    let checkpoint =
        ModelCheckpoint::load(&i.checkpoint).with_context(|| format!("loading {}", i.checkpoint.display()))?;
    let train = load_votes(&i.train)?;
    let test = load_votes(&i.test)?;
    let posts = crate::dataset::index_posts(crate::dataset::load_posts(&i.posts)?);
    let missing = test.iter().filter(|v| !posts.contains_key(&v.post_id)).count();
    if missing > 0 {
        bail!("{missing} test votes reference posts without metadata");
    }
    Ok(Loaded {
        checkpoint,
        train,
        test,
        posts,
    })
}

fn run_dir(out: &Path, command: &str, config: &impl Serialize, seed: Option<u64>, ck: Option<&ModelCheckpoint>) -> Result<RunDir> {
    let mut manifest = Manifest::new(command, config)?;
    manifest.seed = seed;
    manifest.checkpoint_sha256 = ck.map(ModelCheckpoint::digest);
    Ok(RunDir::create(out, manifest)?)
}

fn write_curve(run: &mut RunDir, name: &str, curve: &CurveReport) -> Result<()> {
    run.write_csv(name, &curve.points)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalSettings<'a> {
    balanced: bool,
    activity_bins: &'a [u64],
    agreement_bins: usize,
}

fn eval(a: EvalArgs) -> Result<()> {
    let data = load_inputs(&a.inputs)?;
    let test = if a.unbalanced { data.test.clone() } else { build_balanced_test(&data.test, a.seed) };
    let bins = a.activity_bins.clone().unwrap_or_else(|| DEFAULT_ACTIVITY_BINS.to_vec());
    let settings = EvalSettings {
        balanced: !a.unbalanced,
        activity_bins: &bins,
        agreement_bins: a.agreement_bins,
    };
    let mut run = run_dir(&a.inputs.out, "eval", &settings, Some(a.seed), Some(&data.checkpoint))?;

    let scored = score_votes(&data.checkpoint, &test, &data.posts)?;
    let report = metrics(&scored)?;
    let context = MajorityContext::new(data.train.iter().chain(&data.test));
    let baseline_scored = context.score(&test);
    let baseline = metrics(&baseline_scored)?;
    let (train_users, _) = crate::dataset::compute_stats(&data.train);
    let activity = accuracy_by_user_activity(&scored, &train_users, &bins)?;
    let agreement = accuracy_by_agreement(&scored, &context, a.agreement_bins)?;
    let baseline_agreement = accuracy_by_agreement(&baseline_scored, &context, a.agreement_bins)?;

    run.write_json(
        "metrics.json",
        &serde_json::json!({
            "model": report,
            "majority_baseline": baseline,
            "balanced_accuracy": report.confusion.balanced_accuracy(),
            "row_rates": report.confusion.rates(),
            "agreement": {
                "model": { "minority": agreement.minority, "strict_minority": agreement.strict_minority, "majority": agreement.majority },
                "majority_baseline": { "minority": baseline_agreement.minority, "strict_minority": baseline_agreement.strict_minority, "majority": baseline_agreement.majority },
            },
        }),
    )?;
    run.write_csv("per_community.csv", &report.per_community)?;
    write_curve(&mut run, "activity_curve.csv", &activity)?;
    write_curve(&mut run, "agreement_curve.csv", &agreement.curve)?;
    write_curve(&mut run, "agreement_curve_baseline.csv", &baseline_agreement.curve)?;
    let c = &report.confusion;
    run.write_csv(
        "confusion.csv",
        [
            ("up", c.up_up, c.up_down, c.up_recall()),
            ("down", c.down_up, c.down_down, c.down_recall()),
        ],
    )?;

    println!("test votes        {}", report.count);
    println!("accuracy          {:.4}", report.accuracy);
    println!("roc auc           {}", fmt_opt(report.auc));
    println!("upvote recall     {}", fmt_opt(c.up_recall()));
    println!("downvote recall   {}", fmt_opt(c.down_recall()));
    println!("majority baseline {:.4}", baseline.accuracy);
    println!(
        "minority votes    model {} / baseline {}",
        fmt_opt(agreement.minority),
        fmt_opt(baseline_agreement.minority)
    );
    println!("wrote {}", run.path().display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn with_finetune_lr(mut ck: ModelCheckpoint, lr: Option<f64>) -> Result<ModelCheckpoint> {
    if let Some(lr) = lr {
        let mut hp = ck.hyperparams().clone();
        hp.finetune_learning_rate = lr;
        ck.set_hyperparams(hp)?;
    }
    Ok(ck)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    trial: usize,
    user_id: &'a str,
    post_id: &'a str,
    actual: crate::dataset::Direction,
    k: usize,
    p: f64,
}

fn write_experiment(run: &mut RunDir, prefix: &str, r: &PeerExperimentReport) -> Result<()> {
    write_curve(run, &format!("{prefix}_curve.csv"), &r.curve)?;
    let rows = r.trials.iter().enumerate().flat_map(|(i, t)| {
        t.p.iter().enumerate().map(move |(k, &p)| TraceRow {
            trial: i,
            user_id: &t.user_id,
            post_id: &t.post_id,
            actual: t.actual,
            k,
            p,
        })
    });
    run.write_csv(&format!("{prefix}_trials.csv"), rows)?;
    Ok(())
}

fn print_curve(label: &str, r: &PeerExperimentReport, every: usize) {
    println!("{label}: {} trials, {} posts skipped", r.trials.len(), r.skipped_posts);
    println!("  {:>4} {:>9} {:>11}", "k", "accuracy", "confidence");
    for p in r.curve.points.iter().step_by(every.max(1)) {
        println!("  {:>4} {:>9} {:>11}", p.label, fmt_opt(p.accuracy), fmt_opt(p.confidence));
    }
}

fn peer_exp(a: PeerArgs) -> Result<()> {
    let e = &a.experiment;
    let data = load_inputs(&e.inputs)?;
    let model = with_finetune_lr(data.checkpoint, e.finetune_lr)?;
    let settings = serde_json::json!({
        "max_peers": a.max_peers, "trials": e.trials,
        "finetune_learning_rate": model.hyperparams().finetune_learning_rate,
    });
    let mut run = run_dir(&e.inputs.out, "peer-exp", &settings, Some(e.seed), Some(&model))?;
    let stats = WeightStats::from_votes(&data.train);
    let sample = sample_targets(&data.test, e.trials, e.seed);
    let report = peer_vote_experiment(&model, &data.posts, &stats, &sample, a.max_peers)?;
    write_experiment(&mut run, "peer", &report)?;
    let xs: Vec<f64> = report.curve.points.iter().map(|p| p.x).collect();
    let ys: Vec<Option<f64>> = report.curve.points.iter().map(|p| p.confidence).collect();
    let trend = if ys.iter().all(Option::is_some) {
        trend_test(&xs, &ys.iter().map(|y| y.unwrap()).collect::<Vec<_>>())
    } else {
        None
    };
    run.write_json(
        "summary.json",
        &serde_json::json!({
            "skipped_posts": report.skipped_posts,
            "skipped_steps": report.skipped_steps,
            "majority_agreement": report.majority_agreement,
            "confidence_trend": trend,
        }),
    )?;
    print_curve("peer votes", &report, 1);
    if let Some(t) = trend {
        println!("confidence slope {:+.5} per vote (one-sided p for decline {:.3})", t.slope, t.p_decreasing);
    }
    println!("wrote {}", run.path().display());
    Ok(())
}

fn similar_exp(a: SimilarArgs) -> Result<()> {
    let e = &a.experiment;
    let data = load_inputs(&e.inputs)?;
    let model = with_finetune_lr(data.checkpoint, e.finetune_lr)?;
    let settings = serde_json::json!({
        "k": a.k, "trials": e.trials, "reference_peers": a.reference_peers,
        "finetune_learning_rate": model.hyperparams().finetune_learning_rate,
    });
    let mut run = run_dir(&e.inputs.out, "similar-exp", &settings, Some(e.seed), Some(&model))?;
    let stats = WeightStats::from_votes(&data.train);
    let sample = sample_targets(&data.test, e.trials, e.seed);
    let similarity = SimilarityIndex::new(&data.train);
    let reference = peer_vote_experiment(&model, &data.posts, &stats, &sample, a.reference_peers)?;
    write_experiment(&mut run, "random", &reference)?;
    let level = reference.accuracy_at(a.reference_peers);
    let modes = match a.mode {
        SimilarMode::Support => vec![PeerMode::Support],
        SimilarMode::Adversarial => vec![PeerMode::Adversarial],
        SimilarMode::Both => vec![PeerMode::Support, PeerMode::Adversarial],
    };
    let mut summary = serde_json::Map::new();
    summary.insert("random_accuracy_at_reference".into(), serde_json::json!(level));
    for mode in modes {
        let r = similar_peer_experiment(&model, &data.posts, &stats, &similarity, &sample, a.k, mode)?;
        let name = format!("{mode:?}").to_lowercase();
        write_experiment(&mut run, &name, &r)?;
        let reach = level.and_then(|l| votes_to_reach(&r, l));
        summary.insert(
            name.clone(),
            serde_json::json!({ "final_accuracy": r.accuracy_at(a.k), "votes_to_reach_reference": reach }),
        );
        print_curve(&name, &r, 5);
        if mode == PeerMode::Support {
            println!("  reaches random-peer k={} accuracy after {:?} votes", a.reference_peers, reach);
        }
    }
    run.write_json("summary.json", &summary)?;
    println!("wrote {}", run.path().display());
    Ok(())
}

fn parse_group(spec: &str) -> Result<(String, String)> {
    match spec.split_once('=') {
        Some((name, affinity)) if !name.is_empty() && !affinity.is_empty() => Ok((name.into(), affinity.into())),
        _ => bail!("group must look like NAME=AFFINITY, got `{spec}`"),
    }
}

fn read_id_list(path: &Path) -> Result<BTreeSet<String>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

#[derive(Serialize)]
struct RateRow<'a> {
    post_id: &'a str,
    group: &'a str,
    rate: f64,
}

fn divergence(a: DivergenceArgs) -> Result<()> {
    let ck = ModelCheckpoint::load(&a.checkpoint)?;
    let (votes, posts, _) = load_corpus(&a.corpus.votes, &a.corpus.posts)?;
    let mut groups = Vec::new();
    for spec in &a.groups {
        let (name, affinity) = parse_group(spec)?;
        let curators = match affinity.strip_prefix('@') {
            Some(path) => read_id_list(Path::new(path))?,
            None => {
                select_curator_group(&votes, &a.community, &affinity, DEFAULT_GROUP_MIN_VOTES, DEFAULT_GROUP_MIN_UP_RATE)
            }
        };
        println!("{name}: {} curators", curators.len());
        groups.push(CuratorGroup { name, curators });
    }
    let (stats, _) = crate::dataset::compute_stats(&votes);
    for i in 0..a.random_groups {
        let curators = random_group(&stats, &a.community, a.random_size, a.seed + i as u64);
        groups.push(CuratorGroup::new(format!("random{}", i + 1), curators));
    }
    let mut inventory: Vec<_> = posts.values().filter(|p| p.community == a.community).collect();
    inventory.sort_by(|x, y| x.post_id.cmp(&y.post_id));
    let report = curator_group_divergence(&ck, &inventory, &groups, a.confidence)?;
    let settings = serde_json::json!({
        "community": a.community, "groups": groups, "confidence_threshold": a.confidence,
    });
    let mut run = run_dir(&a.out, "divergence", &settings, Some(a.seed), Some(&ck))?;
    run.write_json("correlation.json", &serde_json::json!({ "groups": report.groups, "matrix": report.matrix }))?;
    let rows = report.rates.iter().zip(&report.groups).flat_map(|(rates, g)| {
        rates.iter().zip(&report.posts).map(move |(&rate, p)| RateRow { post_id: p, group: g, rate })
    });
    run.write_csv("rates.csv", rows)?;
    print!("{:>12}", "");
    for g in &report.groups {
        print!(" {g:>12}");
    }
    println!();
    for (g, row) in report.groups.iter().zip(&report.matrix) {
        print!("{g:>12}");
        for r in row {
            print!(" {:>12}", r.map_or("null".into(), |v| format!("{v:.3}")));
        }
        println!();
    }
    println!("wrote {}", run.path().display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let ck = ModelCheckpoint::load(&a.checkpoint)?;
    let (votes, posts, _) = load_corpus(&a.corpus.votes, &a.corpus.posts)?;
    let curators: BTreeSet<String> = match (&a.curators, &a.curated_by) {
        (Some(path), _) => read_id_list(path)?,
        (None, Some(affinity)) => {
            select_curator_group(&votes, &a.community, affinity, DEFAULT_GROUP_MIN_VOTES, DEFAULT_GROUP_MIN_UP_RATE)
        }
        (None, None) => bail!("give --curators or --curated-by"),
    };
    let mut inventory: Vec<_> = posts.values().filter(|p| p.community == a.community).collect();
    inventory.sort_by(|x, y| x.post_id.cmp(&y.post_id));
    let actual = actual_votes(&votes);
    let report = threshold_sweep(&ck, &inventory, &actual, &curators, a.confidence, &a.thresholds)?;
    let settings = serde_json::json!({
        "community": a.community, "curators": curators, "thresholds": a.thresholds, "confidence_threshold": a.confidence,
    });
    let mut run = run_dir(&a.out, "sweep", &settings, None, Some(&ck))?;
    run.write_csv(
        "rates.csv",
        report.rates.iter().map(|(p, r)| (p.as_str(), *r)),
    )?;
    run.write_csv(
        "levels.csv",
        report.levels.iter().map(|l| (l.threshold, l.size())),
    )?;
    run.write_json("frontstage.json", &report.levels)?;
    println!("{} curators, {} posts", curators.len(), inventory.len());
    for l in &report.levels {
        println!("  threshold {:.2}: {} frontstage", l.threshold, l.size());
    }
    println!("wrote {}", run.path().display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = ServiceConfig::load(&a.config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(admin::serve(config))?;
    Ok(())
}

fn feed_pairs(a: FeedPairsArgs) -> Result<()> {
    let config: FeedPairConfig = study_feed_pairs();
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&a.out, toml::to_string(&config)?)?;
    println!("wrote {} pairs to {}", config.pairs.len(), a.out.display());
    let Some(out) = &a.render else {
        return Ok(());
    };
    let (Some(ckp), Some(votes), Some(posts)) = (&a.checkpoint, &a.votes, &a.posts) else {
        bail!("--render needs --checkpoint, --votes and --posts");
    };
    let ck = ModelCheckpoint::load(ckp)?;
    let (votes, posts, _) = load_corpus(votes, posts)?;
    let mut posts: Vec<_> = posts.into_values().collect();
    posts.sort_by(|x, y| x.post_id.cmp(&y.post_id));
    let mut run = run_dir(out, "feed-pairs", &config, Some(a.seed), Some(&ck))?;
    for pair in &config.pairs {
        for (role, spec) in [("target", &pair.target), ("distractor", &pair.distractor)] {
            match render_feed(spec, &config.settings, &ck, &posts, &votes, a.seed + pair.id as u64) {
                Ok(feed) => {
                    run.write_json(&format!("pair{:02}_{role}.json", pair.id), &feed)?;
                }
                Err(e) => println!("pair {} {role}: {e}", pair.id),
            }
        }
    }
    println!("wrote {}", run.path().display());
    Ok(())
}
