//! Per-rater label modeling over logprob-capable completion backends.
//!
//! The pipeline: ingest disagreement datasets (many raters per instance),
//! pack each rater's labeled history into a budgeted prompt, read exact
//! label probabilities off a backend via forced-prefix continuation queries,
//! turn the per-rater distributions into perspectivist and soft submissions,
//! and score/rank systems with significance-clustered leaderboards.

pub mod backend;
pub mod baselines;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod hash;
pub mod http;
pub mod labeltree;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod ranking;
pub mod schema;
pub mod sft;
pub mod synthetic;
pub mod template;
pub mod wilcoxon;

pub use backend::{
    Backend, BackendConfig, BoundedBackend, ContinuationQuery, ContinuationResult, MockBackend,
    RetryPolicy, WireProtocol,
};
pub use baselines::{baseline_perspectivist, baseline_soft, BaselineKind};
pub use dataset::{
    dataset_stats, load_dataset, render_stats_table, save_dataset, Annotator, Dataset, Instance,
    Rating, SchemaConfig, Split, SplitId, StatsReport,
};
pub use decision::{
    aggregate_mean, aggregate_mixed, decide, decide_argmax, decide_median, select_strategy,
    PerspectivistPrediction, SoftPrediction, Strategy,
};
pub use error::{BackendError, Error, Result};
pub use hash::{derive_seed, fnv1a_64};
pub use http::HttpBackend;
pub use labeltree::{compute_distribution, label_tree_for, LabelDistribution, LabelTree, TreeMode};
pub use metrics::{
    gold_soft_labels, manhattan, mean_ci, score_perspectivist, score_soft, wasserstein_1d,
    ItemScore, SetErrorMode, SoftMetric,
};
pub use pipeline::{
    aggregate_all, config_fingerprint, decide_all, distributions_path, load_distributions,
    load_perspectivist_tsv, load_soft_jsonl, manifest_path, parse_label, run_inference,
    save_perspectivist_tsv, save_soft_jsonl, DecisionRule, DistributionRecord, InferenceOptions,
    InferenceOutcome, ItemFailure, RunManifest,
};
pub use prompt::{
    build_prompt, ApproxTokenCounter, PackingConfig, RenderedPrompt, TokenCount, TokenCounter,
};
pub use ranking::{average_ranks, rank_clusters, render_leaderboard, RankedLeaderboard};
pub use schema::{LabelSchema, LabelValue};
pub use sft::{
    emit, export_grouped, export_per_annotator, load_sequences, MaskedSegment, MaskedSequence,
    SftExport, TrainingDescriptor,
};
pub use synthetic::{
    make_population, oracle_backend, sample_dataset, sample_dataset_splits, OracleBackend,
    OracleTruth, RaterPopulation, SyntheticRater,
};
pub use template::{LabelFieldKind, OutputShape, PromptTemplate};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMode};
