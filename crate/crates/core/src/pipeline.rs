//! Batch inference over a dataset split with a resumable run manifest,
//! plus readers and writers for the artifacts each stage exchanges.
//!
//! Inference answers one distribution per (rater, instance) pair. Completed
//! pairs are logged to an append-only manifest keyed on
//! `dataset|annotator|instance|mode`, so an interrupted run picks up where
//! it stopped instead of re-querying the backend; the manifest header pins
//! a fingerprint of the run configuration to keep mixed-config output
//! directories from silently blending.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{Backend, BackendTokenCounter};
use crate::dataset::{Dataset, Instance, Rating, SplitId};
use crate::decision::{
    aggregate_mean, aggregate_mixed, decide, decide_argmax, decide_median, PerspectivistPrediction,
    SoftPrediction, Strategy,
};
use crate::error::{Error, Result};
use crate::hash::{derive_seed, fnv1a_64};
use crate::labeltree::{compute_distribution, label_tree_for, LabelDistribution, TreeMode};
use crate::prompt::{build_prompt, PackingConfig};
use crate::schema::{LabelSchema, LabelValue};
use crate::template::PromptTemplate;

/// One computed per-rater label distribution, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub dataset: String,
    pub annotator_id: String,
    pub instance_id: String,
    /// Label texts aligned with `probs`, in schema order.
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub mode: String,
    pub seed: u64,
}

impl DistributionRecord {
    pub fn key(&self) -> String {
        pair_key(
            &self.dataset,
            &self.annotator_id,
            &self.instance_id,
            &self.mode,
        )
    }

    /// Re-attach the schema, checking the record still matches it.
    pub fn distribution(&self, schema: &LabelSchema) -> Result<LabelDistribution> {
        if self.labels != schema.label_texts() {
            return Err(Error::Schema(format!(
                "record for {} labels {:?} does not match the schema",
                self.instance_id, self.labels
            )));
        }
        LabelDistribution::new(schema.clone(), self.probs.clone())
    }
}

fn pair_key(dataset: &str, annotator: &str, instance: &str, mode: &str) -> String {
    format!("{dataset}|{annotator}|{instance}|{mode}")
}

/// Hex fingerprint of the parts that define a run's configuration.
pub fn config_fingerprint(parts: &[&str]) -> String {
    format!("{:016x}", fnv1a_64(parts))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ManifestLine {
    Run {
        config_hash: String,
    },
    Item {
        key: String,
        status: ItemStatus,
        latency_ms: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ItemStatus {
    Ok,
    Failed,
}

/// Append-only log of completed and failed pairs for one output directory.
pub struct RunManifest {
    path: PathBuf,
    completed: HashSet<String>,
    file: Mutex<File>,
}

impl RunManifest {
    /// Open or create the manifest, verifying the configuration fingerprint.
    /// Failed items stay off the completed set so a rerun retries them.
    pub fn open(path: &Path, config_hash: &str) -> Result<RunManifest> {
        let mut completed = HashSet::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: ManifestLine = serde_json::from_str(&line).map_err(|e| {
                    Error::parse(path, format!("line {}", lineno + 1), e.to_string())
                })?;
                match parsed {
                    ManifestLine::Run { config_hash: seen } => {
                        if seen != config_hash {
                            return Err(Error::Config(format!(
                                "manifest {} was written with config {seen}, this run has {config_hash}; \
                                 use a fresh output directory",
                                path.display()
                            )));
                        }
                    }
                    ManifestLine::Item { key, status, .. } => {
                        if status == ItemStatus::Ok {
                            completed.insert(key);
                        }
                    }
                }
            }
        }
        let fresh = !path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let manifest = RunManifest {
            path: path.to_path_buf(),
            completed,
            file: Mutex::new(file),
        };
        if fresh {
            manifest.append(&ManifestLine::Run {
                config_hash: config_hash.to_string(),
            })?;
        }
        Ok(manifest)
    }

    pub fn is_done(&self, key: &str) -> bool {
        self.completed.contains(key)
    }

    pub fn completed_count(&self) -> usize {
        self.completed.len()
    }

    fn append(&self, line: &ManifestLine) -> Result<()> {
        let mut file = self.file.lock().expect("manifest lock");
        let text = serde_json::to_string(line)
            .map_err(|e| Error::parse(&self.path, "serialize", e.to_string()))?;
        writeln!(file, "{text}").map_err(|e| Error::io(&self.path, e))?;
        file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn record_ok(&self, key: &str, latency_ms: u64) -> Result<()> {
        self.append(&ManifestLine::Item {
            key: key.to_string(),
            status: ItemStatus::Ok,
            latency_ms,
            error: None,
        })
    }

    pub fn record_failure(&self, key: &str, latency_ms: u64, error: &str) -> Result<()> {
        self.append(&ManifestLine::Item {
            key: key.to_string(),
            status: ItemStatus::Failed,
            latency_ms,
            error: Some(error.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct InferenceOptions {
    pub packing: PackingConfig,
    pub tree_mode: TreeMode,
    pub seed: u64,
    /// Tag separating runs that share an output directory, e.g. ablations.
    pub mode_tag: String,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            packing: PackingConfig::default(),
            tree_mode: TreeMode::default(),
            seed: 0,
            mode_tag: "default".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ItemFailure {
    pub key: String,
    pub annotator_id: String,
    pub instance_id: String,
    pub message: String,
}

#[derive(Debug)]
pub struct InferenceOutcome {
    /// Records completed in this run, in pair order.
    pub records: Vec<DistributionRecord>,
    /// Pairs skipped because the manifest already has them.
    pub skipped: usize,
    pub failures: Vec<ItemFailure>,
    /// Largest number of in-context examples any packed prompt used.
    pub max_examples_used: usize,
}

impl InferenceOutcome {
    pub fn failure_rate(&self) -> f64 {
        let attempted = self.records.len() + self.failures.len();
        if attempted == 0 {
            0.0
        } else {
            self.failures.len() as f64 / attempted as f64
        }
    }
}

pub fn distributions_path(out_dir: &Path) -> PathBuf {
    out_dir.join("distributions.jsonl")
}

pub fn manifest_path(out_dir: &Path) -> PathBuf {
    out_dir.join("manifest.jsonl")
}

/// Answer one distribution per (rater, instance) pair of the split, packing
/// each prompt from the rater's train history. Pairs already in the
/// manifest are skipped; failures are recorded and the batch continues.
pub fn run_inference(
    dataset: &Dataset,
    split_id: SplitId,
    template: &PromptTemplate,
    backend: &dyn Backend,
    options: &InferenceOptions,
    out_dir: &Path,
) -> Result<InferenceOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let template_json = serde_json::to_string(template)
        .map_err(|e| Error::parse(out_dir, "template", e.to_string()))?;
    let fingerprint = config_fingerprint(&[
        &dataset.name,
        split_id.as_str(),
        &template_json,
        &options.packing.budget_tokens.to_string(),
        &options.packing.generation_headroom.to_string(),
        &format!("{:?}", options.packing.max_examples),
        &format!("{:?}", options.tree_mode),
        &options.seed.to_string(),
        &options.mode_tag,
    ]);
    let manifest = RunManifest::open(&manifest_path(out_dir), &fingerprint)?;
    let dist_path = distributions_path(out_dir);
    let dist_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&dist_path)
        .map_err(|e| Error::io(&dist_path, e))?;
    let dist_file = Mutex::new(dist_file);

    let split = dataset.split(split_id)?;
    let train = dataset.split(SplitId::Train)?;
    let tree = label_tree_for(&dataset.schema, &template.output, options.tree_mode)?;
    let label_texts = dataset.schema.label_texts();

    let mut pending = Vec::new();
    let mut skipped = 0usize;
    for rating in &split.ratings {
        let key = pair_key(
            &dataset.name,
            &rating.annotator_id,
            &rating.instance_id,
            &options.mode_tag,
        );
        if manifest.is_done(&key) {
            skipped += 1;
        } else {
            pending.push((key, rating));
        }
    }

    struct Done {
        index: usize,
        record: DistributionRecord,
        examples: usize,
    }

    let results: Vec<std::result::Result<Done, ItemFailure>> = pending
        .par_iter()
        .enumerate()
        .map(|(index, (key, rating))| {
            let started = Instant::now();
            let outcome = (|| -> Result<(DistributionRecord, usize)> {
                let annotator = dataset.annotator(&rating.annotator_id)?;
                let target = split.instances.get(&rating.instance_id).ok_or_else(|| {
                    Error::Validation(format!("split lacks instance {}", rating.instance_id))
                })?;
                let history =
                    dataset.rater_history(&rating.annotator_id, Some(&rating.instance_id))?;
                let pairs: Vec<(&Rating, &Instance)> = history
                    .into_iter()
                    .filter_map(|r| train.instances.get(&r.instance_id).map(|i| (r, i)))
                    .collect();
                let pair_seed = derive_seed(
                    options.seed,
                    &[
                        &dataset.name,
                        &rating.annotator_id,
                        &rating.instance_id,
                        &options.mode_tag,
                    ],
                );
                let prompt = build_prompt(
                    template,
                    &dataset.schema,
                    annotator,
                    &pairs,
                    target,
                    &options.packing,
                    pair_seed,
                    &BackendTokenCounter(backend),
                )?;
                let dist = compute_distribution(&tree, &prompt.text, backend)?;
                let record = DistributionRecord {
                    dataset: dataset.name.clone(),
                    annotator_id: rating.annotator_id.clone(),
                    instance_id: rating.instance_id.clone(),
                    labels: label_texts.clone(),
                    probs: dist.probs,
                    mode: options.mode_tag.clone(),
                    seed: pair_seed,
                };
                Ok((record, prompt.example_count))
            })();
            let latency_ms = started.elapsed().as_millis() as u64;
            match outcome {
                Ok((record, examples)) => {
                    let line = serde_json::to_string(&record).expect("record serializes");
                    {
                        let mut file = dist_file.lock().expect("distribution file lock");
                        writeln!(file, "{line}")
                            .map_err(|e| Error::io(&dist_path, e))
                            .ok();
                        file.flush().ok();
                    }
                    manifest.record_ok(key, latency_ms).ok();
                    Ok(Done {
                        index,
                        record,
                        examples,
                    })
                }
                Err(err) => {
                    let failure = ItemFailure {
                        key: key.clone(),
                        annotator_id: rating.annotator_id.clone(),
                        instance_id: rating.instance_id.clone(),
                        message: err.to_string(),
                    };
                    manifest
                        .record_failure(key, latency_ms, &failure.message)
                        .ok();
                    Err(failure)
                }
            }
        })
        .collect();

    let mut done: Vec<Done> = Vec::new();
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok(d) => done.push(d),
            Err(f) => failures.push(f),
        }
    }
    done.sort_by_key(|d| d.index);
    let max_examples_used = done.iter().map(|d| d.examples).max().unwrap_or(0);
    Ok(InferenceOutcome {
        records: done.into_iter().map(|d| d.record).collect(),
        skipped,
        failures,
        max_examples_used,
    })
}

/// Read a distributions file; reruns may append a pair twice, the last
/// write wins.
pub fn load_distributions(path: &Path) -> Result<Vec<DistributionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut by_key: IndexMap<String, DistributionRecord> = IndexMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DistributionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}", lineno + 1), e.to_string()))?;
        by_key.insert(record.key(), record);
    }
    Ok(by_key.into_values().collect())
}

/// Which rule turns a distribution into a submitted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Argmax for binary and label sets, median for ordered scales.
    #[default]
    SchemaDefault,
    Argmax,
    Median,
}

/// One label per record, sorted by (annotator, instance) for stable output.
pub fn decide_all(
    records: &[DistributionRecord],
    schema: &LabelSchema,
    rule: DecisionRule,
) -> Result<Vec<PerspectivistPrediction>> {
    let mut preds = Vec::with_capacity(records.len());
    for record in records {
        let dist = record.distribution(schema)?;
        let label = match rule {
            DecisionRule::SchemaDefault => decide(&dist)?,
            DecisionRule::Argmax => decide_argmax(&dist)?,
            DecisionRule::Median => decide_median(&dist)?,
        };
        preds.push(PerspectivistPrediction {
            annotator_id: record.annotator_id.clone(),
            instance_id: record.instance_id.clone(),
            label,
        });
    }
    preds.sort_by(|a, b| {
        (a.annotator_id.as_str(), a.instance_id.as_str())
            .cmp(&(b.annotator_id.as_str(), b.instance_id.as_str()))
    });
    Ok(preds)
}

/// One soft label per instance, sorted by instance id.
pub fn aggregate_all(
    records: &[DistributionRecord],
    schema: &LabelSchema,
    strategy: Strategy,
) -> Result<Vec<SoftPrediction>> {
    let mut by_instance: IndexMap<&str, Vec<&DistributionRecord>> = IndexMap::new();
    for record in records {
        by_instance
            .entry(&record.instance_id)
            .or_default()
            .push(record);
    }
    let mut preds = Vec::with_capacity(by_instance.len());
    for (instance_id, group) in by_instance {
        let dists: Vec<LabelDistribution> = group
            .iter()
            .map(|r| r.distribution(schema))
            .collect::<Result<_>>()?;
        let soft = match strategy {
            Strategy::Mean => aggregate_mean(instance_id, &dists)?,
            Strategy::Mixed => {
                let decisions: Vec<PerspectivistPrediction> = group
                    .iter()
                    .zip(&dists)
                    .map(|(r, d)| {
                        Ok(PerspectivistPrediction {
                            annotator_id: r.annotator_id.clone(),
                            instance_id: r.instance_id.clone(),
                            label: decide(d)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                aggregate_mixed(instance_id, &dists, &decisions)?
            }
        };
        preds.push(soft);
    }
    preds.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    Ok(preds)
}

/// Parse a label as written by `LabelSchema::label_text`.
pub fn parse_label(schema: &LabelSchema, text: &str) -> Result<LabelValue> {
    match schema {
        LabelSchema::MultiBinary { .. } => {
            let members: Vec<String> = text.split_whitespace().map(str::to_string).collect();
            schema.canonicalize(&LabelValue::Set(members))
        }
        _ => {
            let value: i64 = text.trim().parse().map_err(|_| {
                Error::Validation(format!("cannot parse label {text:?} as an integer"))
            })?;
            let label = LabelValue::Scalar(value);
            schema.require_index(&label)?;
            Ok(label)
        }
    }
}

/// annotator, instance, label; tab-separated with a header row.
pub fn save_perspectivist_tsv(
    preds: &[PerspectivistPrediction],
    schema: &LabelSchema,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("annotator_id\tinstance_id\tlabel\n");
    for p in preds {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.annotator_id,
            p.instance_id,
            schema.label_text(&p.label)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_perspectivist_tsv(
    path: &Path,
    schema: &LabelSchema,
) -> Result<Vec<PerspectivistPrediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut preds = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (annotator, instance, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(i), Some(l)) => (a, i, l),
            _ => {
                return Err(Error::parse(
                    path,
                    format!("line {}", lineno + 1),
                    "expected annotator_id\tinstance_id\tlabel",
                ))
            }
        };
        preds.push(PerspectivistPrediction {
            annotator_id: annotator.to_string(),
            instance_id: instance.to_string(),
            label: parse_label(schema, label)?,
        });
    }
    Ok(preds)
}

pub fn save_soft_jsonl(preds: &[SoftPrediction], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in preds {
        out.push_str(
            &serde_json::to_string(p)
                .map_err(|e| Error::parse(path, "serialize", e.to_string()))?,
        );
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_soft_jsonl(path: &Path) -> Result<Vec<SoftPrediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut preds = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        preds.push(
            serde_json::from_str(line)
                .map_err(|e| Error::parse(path, format!("line {}", lineno + 1), e.to_string()))?,
        );
    }
    Ok(preds)
}
