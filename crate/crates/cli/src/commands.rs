//! Subcommand implementations. Every command prints human-readable output to
//! stdout and returns the process exit code.

use crate::config::{parse_strategy, ConfigArgs, RunConfig};
use clap::{Args, Parser, Subcommand};
use perspect_core::{
    aggregate_all, average_ranks, baseline_perspectivist, baseline_soft, build_prompt,
    dataset_stats, decide_all, derive_seed, distributions_path, emit, export_grouped,
    export_per_annotator, gold_soft_labels, load_dataset, load_distributions,
    load_perspectivist_tsv, load_soft_jsonl, make_population, manifest_path, mean_ci,
    oracle_backend, rank_clusters, render_leaderboard, render_stats_table, run_inference,
    sample_dataset_splits, save_dataset, save_perspectivist_tsv, save_soft_jsonl,
    score_perspectivist, score_soft, select_strategy, ApproxTokenCounter, Backend, BaselineKind,
    BoundedBackend, DecisionRule, Error, HttpBackend, InferenceOptions, ItemScore, LabelFieldKind,
    LabelSchema, OutputShape, PromptTemplate, RaterPopulation, Result, SetErrorMode, SoftMetric,
    SplitId, TrainingDescriptor, WilcoxonMode,
};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "perspect",
    version,
    about = "Model individual raters of subjective text: pack their history into \
             prompts, read label probabilities from a scoring backend, and turn \
             them into per-rater predictions and soft labels."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print rating and annotator counts per dataset split.
    IngestStats(IngestStatsArgs),
    /// Render packed prompts without querying a backend.
    BuildPrompts(BuildPromptsArgs),
    /// Query the backend for per-rater label distributions (resumable).
    Infer(InferArgs),
    /// Turn stored distributions into one label per rater and instance.
    Decide(DecideArgs),
    /// Combine per-rater distributions into instance-level soft labels.
    Aggregate(AggregateArgs),
    /// Score predictions or baselines against gold ratings.
    Score(ScoreArgs),
    /// Rank systems on paired item scores with significance clustering.
    Rank(RankArgs),
    /// Write loss-masked fine-tuning sequences.
    ExportSft(ExportSftArgs),
    /// Sample a synthetic rater population and dataset.
    Simulate(SimulateArgs),
}

pub fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::IngestStats(a) => cmd_ingest_stats(a),
        Command::BuildPrompts(a) => cmd_build_prompts(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Decide(a) => cmd_decide(a),
        Command::Aggregate(a) => cmd_aggregate(a),
        Command::Score(a) => cmd_score(a),
        Command::Rank(a) => cmd_rank(a),
        Command::ExportSft(a) => cmd_export_sft(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

#[derive(Debug, Args)]
pub struct IngestStatsArgs {
    /// Dataset directories; one table row per split found.
    #[arg(long = "data", value_name = "DIR", required = true, num_args = 1..)]
    pub data: Vec<PathBuf>,
    /// Restrict the report to one split.
    #[arg(long)]
    pub split: Option<String>,
}

fn cmd_ingest_stats(args: IngestStatsArgs) -> Result<i32> {
    let only = args.split.as_deref().map(SplitId::parse).transpose()?;
    let mut reports = Vec::new();
    for dir in &args.data {
        let dataset = load_dataset(dir)?;
        for (split_id, _) in dataset.splits() {
            if only.is_some_and(|s| s != split_id) {
                continue;
            }
            reports.push(dataset_stats(&dataset, split_id)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::UnknownSplit(
            args.split.unwrap_or_else(|| "any".into()),
        ));
    }
    println!("{}", render_stats_table(&reports));
    Ok(0)
}

#[derive(Debug, Args)]
pub struct BuildPromptsArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Write one JSON prompt record per line here.
    #[arg(long, value_name = "FILE")]
    pub out_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct PromptRecord {
    annotator_id: String,
    instance_id: String,
    token_count: usize,
    example_count: usize,
    text: String,
}

fn cmd_build_prompts(args: BuildPromptsArgs) -> Result<i32> {
    let cfg = args.common.resolve()?;
    let dataset = load_dataset(cfg.data_dir()?)?;
    let template = cfg.load_template()?;
    let split = dataset.split(cfg.split)?;
    let train = dataset.split(SplitId::Train)?;
    let packing = cfg.packing();

    let mut records = Vec::new();
    for rating in &split.ratings {
        let annotator = dataset.annotator(&rating.annotator_id)?;
        let target = split.instances.get(&rating.instance_id).ok_or_else(|| {
            Error::Validation(format!(
                "rating references unknown instance {}",
                rating.instance_id
            ))
        })?;
        let history = dataset.rater_history(&rating.annotator_id, Some(&rating.instance_id))?;
        let pairs: Vec<_> = history
            .into_iter()
            .filter_map(|r| train.instances.get(&r.instance_id).map(|i| (r, i)))
            .collect();
        // Same per-pair derivation as `infer`, so the rendered text matches.
        let pair_seed = derive_seed(
            cfg.seed,
            &[
                &dataset.name,
                &rating.annotator_id,
                &rating.instance_id,
                &cfg.mode_tag,
            ],
        );
        let p = build_prompt(
            &template,
            &dataset.schema,
            annotator,
            &pairs,
            target,
            &packing,
            pair_seed,
            &ApproxTokenCounter,
        )?;
        records.push(PromptRecord {
            annotator_id: p.annotator_id,
            instance_id: p.target_instance_id,
            token_count: p.token_count,
            example_count: p.example_count,
            text: p.text,
        });
    }

    let max_tokens = records.iter().map(|r| r.token_count).max().unwrap_or(0);
    let max_examples = records.iter().map(|r| r.example_count).max().unwrap_or(0);
    if let Some(path) = &args.out_file {
        let mut out = String::new();
        for r in &records {
            out.push_str(
                &serde_json::to_string(r)
                    .map_err(|e| Error::parse(path, "serialize", e.to_string()))?,
            );
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        println!("wrote {} prompts to {}", records.len(), path.display());
    } else {
        println!("built {} prompts", records.len());
    }
    println!(
        "budget {} tokens; largest prompt {max_tokens} tokens, most examples {max_examples}",
        cfg.budget_tokens
    );
    Ok(0)
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
}

fn cmd_infer(args: InferArgs) -> Result<i32> {
    let cfg = args.common.resolve()?;
    let dataset = load_dataset(cfg.data_dir()?)?;
    let template = cfg.load_template()?;
    let options = InferenceOptions {
        packing: cfg.packing(),
        tree_mode: cfg.tree_mode,
        seed: cfg.seed,
        mode_tag: cfg.mode_tag.clone(),
    };

    let backend: Box<dyn Backend> = match &cfg.oracle_population {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let pop: RaterPopulation = serde_json::from_str(&text)
                .map_err(|e| Error::parse(path, "population", e.to_string()))?;
            Box::new(oracle_backend(&pop, &template, cfg.tree_mode)?)
        }
        None => Box::new(BoundedBackend::new(
            HttpBackend::new(cfg.backend.clone())?,
            cfg.backend.max_concurrency,
        )),
    };

    let outcome = run_inference(
        &dataset,
        cfg.split,
        &template,
        backend.as_ref(),
        &options,
        &cfg.out_dir,
    )?;

    println!(
        "completed {} pairs, skipped {} already in the manifest, {} failed",
        outcome.records.len(),
        outcome.skipped,
        outcome.failures.len()
    );
    println!("largest prompt used {} examples", outcome.max_examples_used);
    println!(
        "distributions: {}",
        distributions_path(&cfg.out_dir).display()
    );
    println!("manifest: {}", manifest_path(&cfg.out_dir).display());
    for failure in outcome.failures.iter().take(5) {
        eprintln!("failed {}: {}", failure.key, failure.message);
    }
    if outcome.failures.len() > 5 {
        eprintln!("... and {} more failures", outcome.failures.len() - 5);
    }

    let rate = outcome.failure_rate();
    if rate > cfg.failure_threshold {
        eprintln!(
            "failure rate {rate:.3} exceeds threshold {:.3}; rerun to retry failed pairs",
            cfg.failure_threshold
        );
        return Ok(1);
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    /// distributions.jsonl from `infer`, or the run directory itself.
    #[arg(long, value_name = "PATH")]
    pub distributions: PathBuf,
    /// Dataset directory (for the label schema).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// schema-default, argmax, or median.
    #[arg(long, default_value = "schema-default")]
    pub rule: String,
    /// Output TSV of annotator_id, instance_id, label.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

fn resolve_distributions(path: &Path) -> PathBuf {
    if path.is_dir() {
        distributions_path(path)
    } else {
        path.to_path_buf()
    }
}

fn parse_rule(s: &str) -> Result<DecisionRule> {
    match s {
        "schema-default" => Ok(DecisionRule::SchemaDefault),
        "argmax" => Ok(DecisionRule::Argmax),
        "median" => Ok(DecisionRule::Median),
        other => Err(Error::Config(format!(
            "unknown decision rule {other:?} (expected schema-default, argmax, or median)"
        ))),
    }
}

fn cmd_decide(args: DecideArgs) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let records = load_distributions(&resolve_distributions(&args.distributions))?;
    let preds = decide_all(&records, &dataset.schema, parse_rule(&args.rule)?)?;
    save_perspectivist_tsv(&preds, &dataset.schema, &args.out)?;
    println!("decided {} labels -> {}", preds.len(), args.out.display());
    Ok(0)
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// distributions.jsonl from `infer`, or the run directory itself.
    #[arg(long, value_name = "PATH")]
    pub distributions: PathBuf,
    /// Dataset directory (for the label schema, and gold when picking).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// mean or mixed; defaults to the first configured strategy.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Try every configured strategy and keep the best on this split's gold.
    #[arg(long, conflicts_with = "strategy")]
    pub pick_by_dev: bool,
    /// Split holding the gold soft labels for --pick-by-dev.
    #[arg(long, default_value = "dev")]
    pub split: String,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output JSONL of instance-level soft labels.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

fn cmd_aggregate(args: AggregateArgs) -> Result<i32> {
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let dataset = load_dataset(&args.data)?;
    let records = load_distributions(&resolve_distributions(&args.distributions))?;

    let strategy = if args.pick_by_dev {
        let split = SplitId::parse(&args.split)?;
        let gold = gold_soft_labels(&dataset, split)?;
        let metric = SoftMetric::default_for(&dataset.schema);
        let mut dev_scores = Vec::new();
        for &strategy in &cfg.strategies {
            let preds = aggregate_all(&records, &dataset.schema, strategy)?;
            let scores = score_soft(&preds, &gold, metric)?;
            let (mean, _) = mean_ci(&scores)?;
            println!("{}: {mean:.4} on {}", strategy.as_str(), split.as_str());
            dev_scores.push((strategy, mean));
        }
        let chosen = select_strategy(&dev_scores)?;
        println!("picked {}", chosen.as_str());
        chosen
    } else {
        match &args.strategy {
            Some(s) => parse_strategy(s)?,
            None => *cfg
                .strategies
                .first()
                .ok_or_else(|| Error::Config("empty strategy list; pass --strategy".into()))?,
        }
    };

    let preds = aggregate_all(&records, &dataset.schema, strategy)?;
    save_soft_jsonl(&preds, &args.out)?;
    println!(
        "aggregated {} instances with {} -> {}",
        preds.len(),
        strategy.as_str(),
        args.out.display()
    );
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Dataset directory with the gold ratings.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, default_value = "dev")]
    pub split: String,
    /// perspectivist (per-rater labels) or soft (label distributions).
    #[arg(long)]
    pub task: String,
    /// Predictions: TSV for perspectivist, JSONL for soft.
    #[arg(long, value_name = "FILE", conflicts_with = "baseline")]
    pub pred: Option<PathBuf>,
    /// Score a reference baseline instead: most-frequent or random.
    #[arg(long)]
    pub baseline: Option<String>,
    #[arg(long, default_value_t = 17)]
    pub baseline_seed: u64,
    /// Label-set error: per-label-average or exact-match.
    #[arg(long)]
    pub set_mode: Option<String>,
    /// Soft metric override: manhattan or wasserstein.
    #[arg(long)]
    pub metric: Option<String>,
    /// Write the per-item scores as JSON, for `rank`.
    #[arg(long, value_name = "FILE")]
    pub per_item: Option<PathBuf>,
}

fn parse_set_mode(s: &str) -> Result<SetErrorMode> {
    match s {
        "per-label-average" => Ok(SetErrorMode::PerLabelAverage),
        "exact-match" => Ok(SetErrorMode::ExactMatch),
        other => Err(Error::Config(format!(
            "unknown set mode {other:?} (expected per-label-average or exact-match)"
        ))),
    }
}

fn parse_metric(s: &str) -> Result<SoftMetric> {
    match s {
        "manhattan" => Ok(SoftMetric::Manhattan),
        "wasserstein" => Ok(SoftMetric::Wasserstein),
        other => Err(Error::Config(format!(
            "unknown metric {other:?} (expected manhattan or wasserstein)"
        ))),
    }
}

fn parse_baseline(s: &str, seed: u64) -> Result<BaselineKind> {
    match s {
        "most-frequent" => Ok(BaselineKind::MostFrequent),
        "random" => Ok(BaselineKind::Random { seed }),
        other => Err(Error::Config(format!(
            "unknown baseline {other:?} (expected most-frequent or random)"
        ))),
    }
}

fn cmd_score(args: ScoreArgs) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let split_id = SplitId::parse(&args.split)?;
    let scores: Vec<ItemScore> = match args.task.as_str() {
        "perspectivist" => {
            let set_mode = args
                .set_mode
                .as_deref()
                .map(parse_set_mode)
                .transpose()?
                .unwrap_or_default();
            let preds = match (&args.pred, &args.baseline) {
                (Some(path), None) => load_perspectivist_tsv(path, &dataset.schema)?,
                (None, Some(kind)) => baseline_perspectivist(
                    &dataset,
                    split_id,
                    parse_baseline(kind, args.baseline_seed)?,
                )?,
                _ => {
                    return Err(Error::Config(
                        "pass exactly one of --pred or --baseline".into(),
                    ))
                }
            };
            let gold = &dataset.split(split_id)?.ratings;
            score_perspectivist(&preds, gold, &dataset.schema, set_mode)?
        }
        "soft" => {
            let metric = args
                .metric
                .as_deref()
                .map(parse_metric)
                .transpose()?
                .unwrap_or_else(|| SoftMetric::default_for(&dataset.schema));
            let preds = match (&args.pred, &args.baseline) {
                (Some(path), None) => load_soft_jsonl(path)?,
                (None, Some(kind)) => baseline_soft(
                    &dataset,
                    split_id,
                    parse_baseline(kind, args.baseline_seed)?,
                )?,
                _ => {
                    return Err(Error::Config(
                        "pass exactly one of --pred or --baseline".into(),
                    ))
                }
            };
            let gold = gold_soft_labels(&dataset, split_id)?;
            score_soft(&preds, &gold, metric)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown task {other:?} (expected perspectivist or soft)"
            )));
        }
    };

    let (mean, ci) = mean_ci(&scores)?;
    println!(
        "{} {} on {}/{}: {mean:.4} ±{ci:.4} over {} items (lower is better)",
        args.task,
        args.metric.as_deref().unwrap_or("error"),
        dataset.name,
        split_id.as_str(),
        scores.len()
    );
    if let Some(path) = &args.per_item {
        let text = serde_json::to_string_pretty(&scores)
            .map_err(|e| Error::parse(path, "serialize", e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        println!("per-item scores -> {}", path.display());
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Repeated [dataset:]system=per_item.json entries.
    #[arg(long = "scores", value_name = "SPEC", required = true, num_args = 1..)]
    pub scores: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Wilcoxon mode: exact, approx, or auto.
    #[arg(long, default_value = "auto")]
    pub mode: String,
}

fn parse_wilcoxon_mode(s: &str) -> Result<WilcoxonMode> {
    match s {
        "exact" => Ok(WilcoxonMode::Exact),
        "approx" => Ok(WilcoxonMode::NormalApprox),
        "auto" => Ok(WilcoxonMode::Auto),
        other => Err(Error::Config(format!(
            "unknown Wilcoxon mode {other:?} (expected exact, approx, or auto)"
        ))),
    }
}

fn load_item_scores(path: &Path) -> Result<Vec<ItemScore>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, "scores", e.to_string()))
}

/// Systems must score the same items in the same order; anything else makes
/// the paired test meaningless.
fn check_alignment(systems: &[(String, Vec<ItemScore>)]) -> Result<()> {
    let Some((ref_name, reference)) = systems.first() else {
        return Ok(());
    };
    for (name, scores) in &systems[1..] {
        let mut mismatches = Vec::new();
        for (i, (a, b)) in reference.iter().zip(scores).enumerate() {
            if a.instance_id != b.instance_id || a.annotator_id != b.annotator_id {
                mismatches.push(format!(
                    "item {i}: {ref_name} has {}, {name} has {}",
                    item_key(a),
                    item_key(b)
                ));
            }
        }
        if reference.len() != scores.len() {
            mismatches.push(format!(
                "{ref_name} scored {} items, {name} scored {}",
                reference.len(),
                scores.len()
            ));
        }
        if !mismatches.is_empty() {
            mismatches.truncate(6);
            return Err(Error::Validation(format!(
                "systems scored different items:\n  {}",
                mismatches.join("\n  ")
            )));
        }
    }
    Ok(())
}

fn item_key(s: &ItemScore) -> String {
    match &s.annotator_id {
        Some(a) => format!("{a}@{}", s.instance_id),
        None => s.instance_id.clone(),
    }
}

type SystemScores = Vec<(String, Vec<ItemScore>)>;

fn cmd_rank(args: RankArgs) -> Result<i32> {
    let mode = parse_wilcoxon_mode(&args.mode)?;
    // Group the score files by dataset, preserving first-seen order.
    let mut datasets: Vec<(String, SystemScores)> = Vec::new();
    for spec in &args.scores {
        let (rest, path) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "bad --scores {spec:?}; expected [dataset:]system=file"
            ))
        })?;
        let (dataset, system) = match rest.split_once(':') {
            Some((d, s)) => (d.to_string(), s.to_string()),
            None => ("overall".to_string(), rest.to_string()),
        };
        let scores = load_item_scores(Path::new(path))?;
        match datasets.iter_mut().find(|(name, _)| *name == dataset) {
            Some((_, systems)) => systems.push((system, scores)),
            None => datasets.push((dataset, vec![(system, scores)])),
        }
    }

    let mut boards = Vec::new();
    for (dataset, systems) in &datasets {
        check_alignment(systems)?;
        let board = rank_clusters(systems, args.alpha, mode)?;
        println!("== {dataset} ==");
        println!("{}", render_leaderboard(&board));
        boards.push((dataset.clone(), board));
    }

    if boards.len() > 1 {
        println!("== average rank ==");
        for (system, avg) in average_ranks(&boards) {
            println!("{avg:.2}  {system}");
        }
    }
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ExportSftArgs {
    /// Dataset directory to export from (train split).
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Prompt template JSON; <data>/template.json when absent.
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Ratings per sequence; omit for one sequence per annotator.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Token cap for per-annotator sequences.
    #[arg(long, default_value_t = 1024)]
    pub max_length: usize,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    /// Output JSONL; the training descriptor lands next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

fn cmd_export_sft(args: ExportSftArgs) -> Result<i32> {
    let dataset = load_dataset(&args.data)?;
    let template_path = match &args.template {
        Some(p) => p.clone(),
        None => {
            let fallback = args.data.join("template.json");
            if !fallback.exists() {
                return Err(Error::Config(
                    "no prompt template; pass --template or put template.json \
                     in the dataset directory"
                        .into(),
                ));
            }
            fallback
        }
    };
    let template = PromptTemplate::load(&template_path)?;

    let export = match args.group_size {
        Some(group_size) => export_grouped(&dataset, &template, group_size, args.seed)?,
        None => export_per_annotator(
            &dataset,
            &template,
            args.max_length,
            args.seed,
            &ApproxTokenCounter,
        )?,
    };
    for warning in &export.warnings {
        eprintln!("warning: {warning}");
    }

    let descriptor = TrainingDescriptor {
        max_length: args.max_length,
        ..TrainingDescriptor::default()
    };
    emit(&export.sequences, &args.out, &descriptor)?;
    println!(
        "wrote {} sequences to {} ({} warnings)",
        export.sequences.len(),
        args.out.display(),
        export.warnings.len()
    );
    Ok(0)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// binary, likert:MIN:MAX, or multi:name,name,...[:any].
    #[arg(long)]
    pub schema: String,
    #[arg(long, default_value_t = 4)]
    pub raters: usize,
    /// Train-split instances to sample.
    #[arg(long, default_value_t = 50)]
    pub train: usize,
    /// Dev-split instances to sample.
    #[arg(long, default_value_t = 0)]
    pub dev: usize,
    /// Test-split instances to sample.
    #[arg(long, default_value_t = 0)]
    pub test: usize,
    /// Raters assigned per instance; all of them when omitted.
    #[arg(long)]
    pub ratings_per_instance: Option<usize>,
    /// Response noise; 0 makes every rater deterministic.
    #[arg(long, default_value_t = 0.25)]
    pub noise: f64,
    /// Rater biases spread evenly over [-spread, spread].
    #[arg(long, default_value_t = 0.8)]
    pub bias_spread: f64,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    /// Dataset directory to create.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn parse_schema_spec(spec: &str) -> Result<LabelSchema> {
    let mut parts = spec.split(':');
    match parts.next() {
        Some("binary") => Ok(LabelSchema::Binary),
        Some("likert") => {
            let min = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad likert spec {spec:?}")))?;
            let max = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Config(format!("bad likert spec {spec:?}")))?;
            Ok(LabelSchema::Likert {
                min_label: min,
                max_label: max,
            })
        }
        Some("multi") => {
            let names: Vec<String> = parts
                .next()
                .map(|s| s.split(',').map(str::to_string).collect())
                .unwrap_or_default();
            if names.is_empty() || names.iter().any(String::is_empty) {
                return Err(Error::Config(format!("bad multi spec {spec:?}")));
            }
            let at_least_one = match parts.next() {
                None => true,
                Some("any") => false,
                Some(other) => {
                    return Err(Error::Config(format!(
                        "bad multi suffix {other:?} (only :any is recognized)"
                    )));
                }
            };
            Ok(LabelSchema::MultiBinary {
                label_names: names,
                at_least_one_positive: at_least_one,
            })
        }
        _ => Err(Error::Config(format!(
            "unknown schema spec {spec:?} (binary, likert:MIN:MAX, multi:a,b,c)"
        ))),
    }
}

/// The template a simulated dataset ships with: the difficulty field as
/// input, the plainest output shape the schema supports.
pub fn default_template(schema: &LabelSchema) -> PromptTemplate {
    let output = match schema {
        LabelSchema::Binary | LabelSchema::Likert { .. } => OutputShape::Bare,
        LabelSchema::MultiBinary { .. } => OutputShape::Json {
            label_field: "label".into(),
            label_kind: LabelFieldKind::Text,
            explanation_field: None,
        },
    };
    let mut t = PromptTemplate::new(
        "Answer as the annotator would.",
        vec!["difficulty".into()],
        output,
    );
    t.include_annotator_id = true;
    t
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32> {
    let schema = parse_schema_spec(&args.schema)?;
    let pop = make_population(
        &schema,
        args.raters,
        args.bias_spread,
        args.noise,
        args.seed,
    )?;

    let mut counts = Vec::new();
    for (split, n) in [
        (SplitId::Train, args.train),
        (SplitId::Dev, args.dev),
        (SplitId::Test, args.test),
    ] {
        if n > 0 {
            counts.push((split, n));
        }
    }
    let ratings_per_instance = args.ratings_per_instance.unwrap_or(args.raters);
    let (mut dataset, truth) =
        sample_dataset_splits(&pop, &counts, ratings_per_instance, args.seed)?;
    dataset.name = args.name.clone();

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    save_dataset(&dataset, &args.out)?;
    truth.save(&args.out.join("oracle.json"))?;
    let pop_path = args.out.join("population.json");
    let pop_json = serde_json::to_string_pretty(&pop)
        .map_err(|e| Error::parse(&pop_path, "population", e.to_string()))?;
    std::fs::write(&pop_path, pop_json + "\n").map_err(|e| Error::io(&pop_path, e))?;
    default_template(&schema).save(&args.out.join("template.json"))?;

    let n_ratings: usize = counts.iter().map(|(_, n)| n * ratings_per_instance).sum();
    println!(
        "sampled {} raters, {} instances, {n_ratings} ratings -> {}",
        args.raters,
        counts.iter().map(|(_, n)| n).sum::<usize>(),
        args.out.display()
    );
    println!("population truth in oracle.json; run infer with --oracle-population population.json");
    Ok(0)
}
