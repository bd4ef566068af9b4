//! Decision rules over label distributions and aggregation of per-rater
//! distributions into soft label predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeltree::LabelDistribution;
use crate::schema::{LabelSchema, LabelValue};

/// A single rater/instance answer for submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectivistPrediction {
    pub annotator_id: String,
    pub instance_id: String,
    pub label: LabelValue,
}

/// How per-rater distributions are combined into an instance-level soft label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Mean of the per-rater distributions.
    Mean,
    /// Equal blend of the mean distribution and the mean one-hot decision.
    Mixed,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Mean => "mean",
            Strategy::Mixed => "mixed",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Instance-level soft label: a distribution over scalar labels, or
/// per-label positive rates for label-set schemas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftPrediction {
    pub instance_id: String,
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub strategy: Strategy,
}

fn argmax_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Most probable label. For label-set schemas, each label goes positive when
/// its marginal exceeds 0.5; if none does, the largest marginal is flipped
/// positive so the at-least-one constraint holds. Ties keep the lowest index.
pub fn decide_argmax(dist: &LabelDistribution) -> Result<LabelValue> {
    dist.validate()?;
    match &dist.schema {
        LabelSchema::Binary => {
            let labels = dist.schema.valid_labels();
            Ok(labels[argmax_index(&dist.probs)].clone())
        }
        LabelSchema::MultiBinary { .. } => {
            decide_argmax_marginals(&dist.schema, &dist.marginals()?)
        }
        LabelSchema::Likert { .. } => Err(Error::Schema(
            "argmax decisions are for binary and label-set schemas; ordered scales use the median rule"
                .into(),
        )),
    }
}

/// Threshold per-label marginals at 0.5 with max-marginal constraint repair.
pub fn decide_argmax_marginals(schema: &LabelSchema, marginals: &[f64]) -> Result<LabelValue> {
    let LabelSchema::MultiBinary { label_names, .. } = schema else {
        return Err(Error::Schema(
            "marginal decisions are defined only for label-set schemas".into(),
        ));
    };
    if marginals.len() != label_names.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginals for {} labels",
            marginals.len(),
            label_names.len()
        )));
    }
    let mut members: Vec<String> = label_names
        .iter()
        .zip(marginals)
        .filter(|(_, &m)| m > 0.5)
        .map(|(name, _)| name.clone())
        .collect();
    if members.is_empty() {
        members.push(label_names[argmax_index(marginals)].clone());
    }
    Ok(LabelValue::Set(members))
}

/// Smallest label whose CDF reaches 0.5; minimizes expected absolute
/// distance, taking the lower label when both neighbors tie.
pub fn decide_median(dist: &LabelDistribution) -> Result<LabelValue> {
    dist.validate()?;
    if !matches!(dist.schema, LabelSchema::Likert { .. }) {
        return Err(Error::Schema(
            "median decisions are defined only for ordered scales".into(),
        ));
    }
    let labels = dist.schema.valid_labels();
    let mut cdf = 0.0;
    for (label, &p) in labels.iter().zip(&dist.probs) {
        cdf += p;
        if cdf >= 0.5 - 1e-9 {
            return Ok(label.clone());
        }
    }
    Ok(labels
        .last()
        .expect("schemas have at least one label")
        .clone())
}

/// Schema-appropriate decision rule: argmax for binary and label sets,
/// median for ordered scales.
pub fn decide(dist: &LabelDistribution) -> Result<LabelValue> {
    match &dist.schema {
        LabelSchema::Likert { .. } => decide_median(dist),
        _ => decide_argmax(dist),
    }
}

/// A distribution's coordinates on the soft-label axis: the distribution
/// itself for scalar schemas, per-label marginals for label-set schemas.
pub fn soft_vector(dist: &LabelDistribution) -> Result<Vec<f64>> {
    match &dist.schema {
        LabelSchema::MultiBinary { .. } => dist.marginals(),
        _ => Ok(dist.probs.clone()),
    }
}

/// A decided label's coordinates on the soft-label axis: one-hot for scalar
/// schemas, membership indicators for label sets.
pub fn one_hot_vector(schema: &LabelSchema, label: &LabelValue) -> Result<Vec<f64>> {
    match (schema, label) {
        (LabelSchema::MultiBinary { label_names, .. }, LabelValue::Set(members)) => Ok(label_names
            .iter()
            .map(|n| if members.contains(n) { 1.0 } else { 0.0 })
            .collect()),
        (_, label) => {
            let idx = schema.require_index(label)?;
            let mut v = vec![0.0; schema.label_count()];
            v[idx] = 1.0;
            Ok(v)
        }
    }
}

fn mean_vectors(vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = vectors.len();
    if n == 0 {
        return Err(Error::Validation(
            "cannot aggregate an empty distribution list".into(),
        ));
    }
    let dim = vectors[0].len();
    let mut out = vec![0.0; dim];
    for v in vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "soft vectors of length {} and {}",
                dim,
                v.len()
            )));
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= n as f64;
    }
    Ok(out)
}

fn check_same_schema(dists: &[LabelDistribution]) -> Result<&LabelSchema> {
    let schema = &dists[0].schema;
    for d in dists {
        if &d.schema != schema {
            return Err(Error::Schema(
                "aggregation requires all distributions to share one schema".into(),
            ));
        }
        d.validate()?;
    }
    Ok(schema)
}

/// Elementwise mean of the assigned raters' distributions.
pub fn aggregate_mean(instance_id: &str, dists: &[LabelDistribution]) -> Result<SoftPrediction> {
    if dists.is_empty() {
        return Err(Error::Validation(format!(
            "no distributions to aggregate for instance {instance_id}"
        )));
    }
    let schema = check_same_schema(dists)?;
    let vectors: Vec<Vec<f64>> = dists.iter().map(soft_vector).collect::<Result<_>>()?;
    Ok(SoftPrediction {
        instance_id: instance_id.to_string(),
        labels: schema.soft_axis(),
        probs: mean_vectors(&vectors)?,
        strategy: Strategy::Mean,
    })
}

/// Equal blend of the mean distribution and the mean one-hot decision,
/// matched rater-for-rater.
pub fn aggregate_mixed(
    instance_id: &str,
    dists: &[LabelDistribution],
    decisions: &[PerspectivistPrediction],
) -> Result<SoftPrediction> {
    if dists.len() != decisions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} distributions but {} decisions for instance {instance_id}",
            dists.len(),
            decisions.len()
        )));
    }
    let mean = aggregate_mean(instance_id, dists)?;
    let schema = &dists[0].schema;
    let hots: Vec<Vec<f64>> = decisions
        .iter()
        .map(|d| {
            if d.instance_id != instance_id {
                return Err(Error::Validation(format!(
                    "decision for instance {} mixed into instance {instance_id}",
                    d.instance_id
                )));
            }
            one_hot_vector(schema, &d.label)
        })
        .collect::<Result<_>>()?;
    let hot_mean = mean_vectors(&hots)?;
    let probs = mean
        .probs
        .iter()
        .zip(&hot_mean)
        .map(|(a, b)| 0.5 * a + 0.5 * b)
        .collect();
    Ok(SoftPrediction {
        instance_id: instance_id.to_string(),
        labels: mean.labels,
        probs,
        strategy: Strategy::Mixed,
    })
}

/// Pick the strategy with the lowest dev loss; ties keep the earlier entry.
pub fn select_strategy(dev_scores: &[(Strategy, f64)]) -> Result<Strategy> {
    let mut best: Option<(Strategy, f64)> = None;
    for &(strategy, score) in dev_scores {
        match best {
            Some((_, s)) if score >= s => {}
            _ => best = Some((strategy, score)),
        }
    }
    best.map(|(s, _)| s)
        .ok_or_else(|| Error::Validation("no strategies were scored".into()))
}
