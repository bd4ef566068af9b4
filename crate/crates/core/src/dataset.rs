//! Dataset ingest: parsing, validation, and indexing of disagreement datasets.
//!
//! A dataset lives in a directory with a `schema.json` sidecar naming the
//! label kind, plus one JSON file per split (`train.json`, `dev.json`,
//! `test.json`), each holding arrays of instance, annotator, and rating
//! records. Test ratings may omit the label; such records mark an
//! annotator/instance assignment to predict.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::schema::{LabelSchema, LabelValue};

pub const SPLIT_IDS: [SplitId; 3] = [SplitId::Train, SplitId::Dev, SplitId::Test];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitId {
    Train,
    Dev,
    Test,
}

impl SplitId {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitId::Train => "train",
            SplitId::Dev => "dev",
            SplitId::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<SplitId> {
        match s {
            "train" => Ok(SplitId::Train),
            "dev" => Ok(SplitId::Dev),
            "test" => Ok(SplitId::Test),
            other => Err(Error::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for SplitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One item to be rated. The payload is kept as ordered raw key/value text,
/// never interpreted, so prompt rendering is byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub payload: IndexMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub annotator_id: String,
    #[serde(default)]
    pub demographics: IndexMap<String, String>,
}

/// One annotator's judgment of one instance. A missing label marks an
/// assignment whose value is to be predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub annotator_id: String,
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Split {
    pub instances: IndexMap<String, Instance>,
    pub annotators: IndexMap<String, Annotator>,
    pub ratings: Vec<Rating>,
    assignments: IndexMap<String, Vec<String>>,
    by_annotator: HashMap<String, Vec<usize>>,
    by_pair: HashMap<(String, String), usize>,
}

impl Split {
    /// Annotator ids assigned to an instance, in rating-record order.
    pub fn assigned_annotators(&self, instance_id: &str) -> &[String] {
        self.assignments
            .get(instance_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Instance ids that have at least one rating record, in first-seen order.
    pub fn assigned_instances(&self) -> impl Iterator<Item = &str> {
        self.assignments.keys().map(String::as_str)
    }

    pub fn ratings_of(&self, annotator_id: &str) -> Vec<&Rating> {
        self.by_annotator
            .get(annotator_id)
            .map(|idxs| idxs.iter().map(|&i| &self.ratings[i]).collect())
            .unwrap_or_default()
    }

    pub fn rating_for(&self, annotator_id: &str, instance_id: &str) -> Option<&Rating> {
        self.by_pair
            .get(&(annotator_id.to_string(), instance_id.to_string()))
            .map(|&i| &self.ratings[i])
    }

    fn rebuild_indexes(&mut self) {
        self.assignments.clear();
        self.by_annotator.clear();
        self.by_pair.clear();
        for (i, r) in self.ratings.iter().enumerate() {
            self.assignments
                .entry(r.instance_id.clone())
                .or_default()
                .push(r.annotator_id.clone());
            self.by_annotator
                .entry(r.annotator_id.clone())
                .or_default()
                .push(i);
            self.by_pair
                .insert((r.annotator_id.clone(), r.instance_id.clone()), i);
        }
    }
}

/// A fully indexed dataset: schema plus up to three splits and a dataset-wide
/// annotator registry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub schema: LabelSchema,
    splits: IndexMap<SplitId, Split>,
    annotator_registry: IndexMap<String, Annotator>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, schema: LabelSchema) -> Result<Dataset> {
        schema.validate()?;
        Ok(Dataset {
            name: name.into(),
            schema,
            splits: IndexMap::new(),
            annotator_registry: IndexMap::new(),
        })
    }

    pub fn split(&self, id: SplitId) -> Result<&Split> {
        self.splits
            .get(&id)
            .ok_or_else(|| Error::UnknownSplit(id.to_string()))
    }

    pub fn has_split(&self, id: SplitId) -> bool {
        self.splits.contains_key(&id)
    }

    pub fn splits(&self) -> impl Iterator<Item = (SplitId, &Split)> {
        self.splits.iter().map(|(id, s)| (*id, s))
    }

    /// Dataset-wide annotator lookup (union over splits).
    pub fn annotator(&self, annotator_id: &str) -> Result<&Annotator> {
        self.annotator_registry
            .get(annotator_id)
            .ok_or_else(|| Error::UnknownAnnotator(annotator_id.to_string()))
    }

    pub fn annotators(&self) -> impl Iterator<Item = &Annotator> {
        self.annotator_registry.values()
    }

    /// Insert a split, validating every record against the schema and the
    /// cross-reference invariants.
    pub fn insert_split(&mut self, id: SplitId, mut split: Split) -> Result<()> {
        for (ann_id, ann) in &split.annotators {
            match self.annotator_registry.get(ann_id) {
                Some(existing) if existing.demographics != ann.demographics => {
                    return Err(Error::Validation(format!(
                        "annotator {ann_id} has conflicting demographics across splits"
                    )));
                }
                Some(_) => {}
                None => {
                    self.annotator_registry.insert(ann_id.clone(), ann.clone());
                }
            }
        }
        let mut seen_pairs = HashMap::new();
        for (i, r) in split.ratings.iter().enumerate() {
            let locator = format!(
                "rating #{i} (annotator {}, instance {})",
                r.annotator_id, r.instance_id
            );
            if !split.instances.contains_key(&r.instance_id) {
                return Err(Error::Validation(format!(
                    "{locator}: references an unknown instance"
                )));
            }
            if !self.annotator_registry.contains_key(&r.annotator_id) {
                return Err(Error::Validation(format!(
                    "{locator}: references an unknown annotator"
                )));
            }
            if let Some(prev) =
                seen_pairs.insert((r.annotator_id.clone(), r.instance_id.clone()), i)
            {
                return Err(Error::Validation(format!(
                    "{locator}: duplicate of rating #{prev}"
                )));
            }
            if let Some(label) = &r.label {
                if !self.schema.is_valid(label) {
                    return Err(Error::Validation(format!(
                        "{locator}: label {label:?} is not valid under the schema"
                    )));
                }
            }
        }
        // Canonicalize set labels so equality and indexing are stable.
        for r in &mut split.ratings {
            if let Some(label) = &r.label {
                r.label = Some(self.schema.canonicalize(label)?);
            }
        }
        split.rebuild_indexes();
        self.splits.insert(id, split);
        Ok(())
    }

    /// All labeled train-split ratings of one annotator, excluding the target
    /// instance when given, in deterministic order by instance id.
    pub fn rater_history(
        &self,
        annotator_id: &str,
        exclude_instance: Option<&str>,
    ) -> Result<Vec<&Rating>> {
        self.annotator(annotator_id)?;
        let train = self.split(SplitId::Train)?;
        let mut history: Vec<&Rating> = train
            .ratings_of(annotator_id)
            .into_iter()
            .filter(|r| r.label.is_some())
            .filter(|r| exclude_instance != Some(r.instance_id.as_str()))
            .collect();
        history.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        Ok(history)
    }
}

/// Sidecar describing a dataset directory: name plus label schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub name: String,
    pub label: LabelSchema,
}

impl SchemaConfig {
    pub fn load(path: &Path) -> Result<SchemaConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: SchemaConfig = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, format!("line {}", e.line()), e.to_string()))?;
        cfg.label.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SplitFile {
    #[serde(default)]
    instances: Vec<RawInstance>,
    #[serde(default)]
    annotators: Vec<Annotator>,
    #[serde(default)]
    ratings: Vec<Rating>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    instance_id: String,
    payload: IndexMap<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    language_tag: Option<String>,
}

fn coerce_payload_value(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Load a dataset directory: `schema.json` plus any of `train.json`,
/// `dev.json`, `test.json`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let schema_cfg = SchemaConfig::load(&dir.join("schema.json"))?;
    load_dataset_with_schema(dir, schema_cfg)
}

pub fn load_dataset_with_schema(dir: &Path, schema_cfg: SchemaConfig) -> Result<Dataset> {
    let mut dataset = Dataset::new(schema_cfg.name, schema_cfg.label)?;
    let mut any = false;
    for id in SPLIT_IDS {
        let path = dir.join(format!("{id}.json"));
        if !path.exists() {
            continue;
        }
        any = true;
        let split = load_split_file(&path)?;
        dataset.insert_split(id, split)?;
    }
    if !any {
        return Err(Error::Config(format!(
            "no split files found under {}",
            dir.display()
        )));
    }
    Ok(dataset)
}

fn load_split_file(path: &Path) -> Result<Split> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: SplitFile = serde_json::from_str(&text)
        .map_err(|e| Error::parse(path, format!("line {}", e.line()), e.to_string()))?;

    let mut split = Split::default();
    for (i, inst) in raw.instances.into_iter().enumerate() {
        if inst.payload.is_empty() {
            return Err(Error::parse(
                path,
                format!("instance #{i} ({})", inst.instance_id),
                "payload must be non-empty",
            ));
        }
        let mut payload = IndexMap::new();
        for (k, v) in &inst.payload {
            let coerced = coerce_payload_value(v).ok_or_else(|| {
                Error::parse(
                    path,
                    format!("instance #{i} ({})", inst.instance_id),
                    format!("payload field {k:?} must be a string, number, or bool"),
                )
            })?;
            payload.insert(k.clone(), coerced);
        }
        let prev = split.instances.insert(
            inst.instance_id.clone(),
            Instance {
                instance_id: inst.instance_id.clone(),
                payload,
                language_tag: inst.language_tag,
            },
        );
        if prev.is_some() {
            return Err(Error::parse(
                path,
                format!("instance #{i}"),
                format!("duplicate instance_id {:?}", inst.instance_id),
            ));
        }
    }
    for (i, ann) in raw.annotators.into_iter().enumerate() {
        let prev = split.annotators.insert(ann.annotator_id.clone(), ann);
        if let Some(prev) = prev {
            return Err(Error::parse(
                path,
                format!("annotator #{i}"),
                format!("duplicate annotator_id {:?}", prev.annotator_id),
            ));
        }
    }
    split.ratings = raw.ratings;
    Ok(split)
}

/// Write a dataset back out in the ingest layout.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema_cfg = SchemaConfig {
        name: dataset.name.clone(),
        label: dataset.schema.clone(),
    };
    write_json(&dir.join("schema.json"), &schema_cfg)?;
    for (id, split) in dataset.splits() {
        let file = SplitFile {
            instances: split
                .instances
                .values()
                .map(|inst| RawInstance {
                    instance_id: inst.instance_id.clone(),
                    payload: inst
                        .payload
                        .iter()
                        .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                        .collect(),
                    language_tag: inst.language_tag.clone(),
                })
                .collect(),
            annotators: split.annotators.values().cloned().collect(),
            ratings: split.ratings.clone(),
        };
        write_json(&dir.join(format!("{id}.json")), &file)?;
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::parse(path, "serialize", e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-split counts and ratings-per-annotator summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset: String,
    pub split: SplitId,
    pub n_ratings: usize,
    pub n_instances: usize,
    pub n_annotators: usize,
    pub mean_ratings_per_annotator: f64,
    pub min_ratings_per_annotator: usize,
    pub max_ratings_per_annotator: usize,
}

/// Compute split statistics. Annotator counts cover annotators with at least
/// one rating record (labeled or assignment-only) in the split.
pub fn dataset_stats(dataset: &Dataset, split_id: SplitId) -> Result<StatsReport> {
    let split = dataset.split(split_id)?;
    let mut per_annotator: HashMap<&str, usize> = HashMap::new();
    for r in &split.ratings {
        *per_annotator.entry(r.annotator_id.as_str()).or_default() += 1;
    }
    let n_annotators = per_annotator.len();
    let (mut min, mut max) = (usize::MAX, 0usize);
    for &c in per_annotator.values() {
        min = min.min(c);
        max = max.max(c);
    }
    if n_annotators == 0 {
        min = 0;
    }
    Ok(StatsReport {
        dataset: dataset.name.clone(),
        split: split_id,
        n_ratings: split.ratings.len(),
        n_instances: split.instances.len(),
        n_annotators,
        mean_ratings_per_annotator: if n_annotators == 0 {
            0.0
        } else {
            split.ratings.len() as f64 / n_annotators as f64
        },
        min_ratings_per_annotator: min,
        max_ratings_per_annotator: max,
    })
}

/// Render reports as an aligned-column text table.
pub fn render_stats_table(reports: &[StatsReport]) -> String {
    let header = [
        "dataset",
        "split",
        "ratings",
        "instances",
        "annotators",
        "mean_r/a",
        "min_r/a",
        "max_r/a",
    ];
    let mut rows: Vec<[String; 8]> = vec![header.map(str::to_string)];
    for r in reports {
        rows.push([
            r.dataset.clone(),
            r.split.to_string(),
            r.n_ratings.to_string(),
            r.n_instances.to_string(),
            r.n_annotators.to_string(),
            format!("{:.1}", r.mean_ratings_per_annotator),
            r.min_ratings_per_annotator.to_string(),
            r.max_ratings_per_annotator.to_string(),
        ]);
    }
    let mut widths = [0usize; 8];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}


#[cfg(test)]
mod tests {
    use super::fixtures::mini_binary_dataset;
    use super::*;

    #[test]
    fn stats_on_mini_dataset() {
        let d = mini_binary_dataset();
        let s = dataset_stats(&d, SplitId::Train).unwrap();
        assert_eq!(s.n_ratings, 3);
        assert_eq!(s.n_instances, 3);
        assert_eq!(s.n_annotators, 2);
        assert_eq!(s.mean_ratings_per_annotator, 1.5);
        assert_eq!(s.min_ratings_per_annotator, 1);
        assert_eq!(s.max_ratings_per_annotator, 2);
    }

    #[test]
    fn stats_degenerate_single_annotator() {
        let mut d = Dataset::new("one", LabelSchema::Binary).unwrap();
        let mut split = Split::default();
        for i in 0..3 {
            let id = format!("i{i}");
            split.instances.insert(
                id.clone(),
                Instance {
                    instance_id: id,
                    payload: IndexMap::from([("t".to_string(), "x".to_string())]),
                    language_tag: None,
                },
            );
            split.ratings.push(Rating {
                annotator_id: "solo".into(),
                instance_id: format!("i{i}"),
                label: Some(LabelValue::Scalar(0)),
                explanation: None,
            });
        }
        split.annotators.insert(
            "solo".into(),
            Annotator {
                annotator_id: "solo".into(),
                demographics: IndexMap::new(),
            },
        );
        d.insert_split(SplitId::Train, split).unwrap();
        let s = dataset_stats(&d, SplitId::Train).unwrap();
        assert_eq!(s.mean_ratings_per_annotator, 3.0);
        assert_eq!(s.min_ratings_per_annotator, 3);
        assert_eq!(s.max_ratings_per_annotator, 3);
    }

    #[test]
    fn unknown_split_errors() {
        let d = mini_binary_dataset();
        assert!(matches!(
            dataset_stats(&d, SplitId::Dev),
            Err(Error::UnknownSplit(_))
        ));
    }

    #[test]
    fn rater_history_excludes_target() {
        let d = mini_binary_dataset();
        let h = d.rater_history("a1", Some("i1")).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].instance_id, "i0");
        let all = d.rater_history("a1", None).unwrap();
        assert_eq!(all.len(), 2);
        assert!(d.rater_history("nobody", None).is_err());
    }

    #[test]
    fn rating_with_out_of_range_label_rejected() {
        let mut d = Dataset::new(
            "csc-like",
            LabelSchema::Likert {
                min_label: 1,
                max_label: 6,
            },
        )
        .unwrap();
        let mut split = Split::default();
        split.instances.insert(
            "i0".into(),
            Instance {
                instance_id: "i0".into(),
                payload: IndexMap::from([("t".to_string(), "x".to_string())]),
                language_tag: None,
            },
        );
        split.annotators.insert(
            "a1".into(),
            Annotator {
                annotator_id: "a1".into(),
                demographics: IndexMap::new(),
            },
        );
        split.ratings = vec![Rating {
            annotator_id: "a1".into(),
            instance_id: "i0".into(),
            label: Some(LabelValue::Scalar(7)),
            explanation: None,
        }];
        let err = d.insert_split(SplitId::Train, split).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("a1") && msg.contains("i0"),
            "error should name the rating: {msg}"
        );
    }
}
