//! Item-level scoring: per-rating error and distance for perspectivist
//! predictions, Manhattan and 1-D Wasserstein for soft labels, and the
//! mean ± 1.96·SE summary used in reports.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Rating, SplitId};
use crate::decision::{PerspectivistPrediction, SoftPrediction};
use crate::error::{Error, Result};
use crate::schema::{LabelSchema, LabelValue};

/// One scored test item. `annotator_id` is set for perspectivist items and
/// absent for instance-level soft items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator_id: Option<String>,
    pub score: f64,
}

/// How label-set predictions are scored against gold sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetErrorMode {
    /// Mean over label names of the membership mismatch indicator.
    #[default]
    PerLabelAverage,
    /// 0 when the sets match exactly, 1 otherwise.
    ExactMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftMetric {
    Manhattan,
    Wasserstein,
}

impl SoftMetric {
    /// The conventional metric for a schema: ordered scales pay distance,
    /// everything else pays per-label Manhattan.
    pub fn default_for(schema: &LabelSchema) -> SoftMetric {
        match schema {
            LabelSchema::Likert { .. } => SoftMetric::Wasserstein,
            _ => SoftMetric::Manhattan,
        }
    }
}

pub fn label_error(
    schema: &LabelSchema,
    set_mode: SetErrorMode,
    pred: &LabelValue,
    gold: &LabelValue,
) -> Result<f64> {
    let pred = schema.canonicalize(pred)?;
    let gold = schema.canonicalize(gold)?;
    match schema {
        LabelSchema::Binary => Ok(if pred == gold { 0.0 } else { 1.0 }),
        LabelSchema::Likert { .. } => {
            let (LabelValue::Scalar(p), LabelValue::Scalar(g)) = (&pred, &gold) else {
                return Err(Error::Schema("ordered scales take scalar labels".into()));
            };
            Ok((p - g).abs() as f64)
        }
        LabelSchema::MultiBinary { label_names, .. } => match set_mode {
            SetErrorMode::ExactMatch => Ok(if pred == gold { 0.0 } else { 1.0 }),
            SetErrorMode::PerLabelAverage => {
                let (LabelValue::Set(p), LabelValue::Set(g)) = (&pred, &gold) else {
                    return Err(Error::Schema("label-set schemas take set labels".into()));
                };
                let mismatches = label_names
                    .iter()
                    .filter(|n| p.contains(n) != g.contains(n))
                    .count();
                Ok(mismatches as f64 / label_names.len() as f64)
            }
        },
    }
}

/// Score predictions against gold ratings, one item per labeled gold pair.
/// Unlabeled gold records (prediction targets) are skipped; a labeled pair
/// without a prediction is an error.
pub fn score_perspectivist(
    preds: &[PerspectivistPrediction],
    gold: &[Rating],
    schema: &LabelSchema,
    set_mode: SetErrorMode,
) -> Result<Vec<ItemScore>> {
    let by_pair: HashMap<(&str, &str), &PerspectivistPrediction> = preds
        .iter()
        .map(|p| ((p.annotator_id.as_str(), p.instance_id.as_str()), p))
        .collect();
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for rating in gold {
        let Some(gold_label) = &rating.label else {
            continue;
        };
        let key = (rating.annotator_id.as_str(), rating.instance_id.as_str());
        match by_pair.get(&key) {
            Some(pred) => scores.push(ItemScore {
                instance_id: rating.instance_id.clone(),
                annotator_id: Some(rating.annotator_id.clone()),
                score: label_error(schema, set_mode, &pred.label, gold_label)?,
            }),
            None => missing.push(format!("{}@{}", rating.annotator_id, rating.instance_id)),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPredictions {
            count: missing.len(),
            first: missing[0].clone(),
        });
    }
    Ok(scores)
}

pub fn manhattan(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// W1 on unit-spaced ordered labels: the sum of absolute CDF differences.
pub fn wasserstein_1d(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut carry = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        carry += a - b;
        total += carry.abs();
    }
    // The final carry is the mass imbalance (0 for normalized pairs) and is
    // already counted once; dropping it would hide unnormalized inputs.
    Ok(total)
}

/// Mean score and the 95% halfwidth 1.96 · SD/√n, with SD taken over the
/// scores as given (the n-denominator form, so [0, 1] yields ≈ 0.693).
pub fn mean_ci(scores: &[ItemScore]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Validation("no item scores to summarize".into()));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|s| s.score).sum::<f64>() / n;
    let variance = scores.iter().map(|s| (s.score - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, 1.96 * variance.sqrt() / n.sqrt()))
}

/// Empirical soft labels for a split: per-instance label frequencies over
/// its labeled ratings (per-label positive rates for label-set schemas).
/// Instances without labeled ratings are omitted.
pub fn gold_soft_labels(
    dataset: &Dataset,
    split_id: SplitId,
) -> Result<IndexMap<String, Vec<f64>>> {
    let split = dataset.split(split_id)?;
    let axis_len = dataset.schema.soft_axis().len();
    let mut sums: IndexMap<String, (Vec<f64>, usize)> = IndexMap::new();
    for rating in &split.ratings {
        let Some(label) = &rating.label else {
            continue;
        };
        let one_hot = crate::decision::one_hot_vector(&dataset.schema, label)?;
        let entry = sums
            .entry(rating.instance_id.clone())
            .or_insert_with(|| (vec![0.0; axis_len], 0));
        for (s, v) in entry.0.iter_mut().zip(&one_hot) {
            *s += v;
        }
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(id, (sum, count))| {
            let freq = sum.iter().map(|s| s / count as f64).collect();
            (id, freq)
        })
        .collect())
}

/// Score soft predictions against gold soft labels, one item per gold
/// instance.
pub fn score_soft(
    preds: &[SoftPrediction],
    gold: &IndexMap<String, Vec<f64>>,
    metric: SoftMetric,
) -> Result<Vec<ItemScore>> {
    let by_instance: HashMap<&str, &SoftPrediction> =
        preds.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    let mut scores = Vec::new();
    let mut missing = Vec::new();
    for (instance_id, target) in gold {
        match by_instance.get(instance_id.as_str()) {
            Some(pred) => {
                let score = match metric {
                    SoftMetric::Manhattan => manhattan(&pred.probs, target)?,
                    SoftMetric::Wasserstein => wasserstein_1d(&pred.probs, target)?,
                };
                scores.push(ItemScore {
                    instance_id: instance_id.clone(),
                    annotator_id: None,
                    score,
                });
            }
            None => missing.push(instance_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingPredictions {
            count: missing.len(),
            first: missing[0].clone(),
        });
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(score: f64) -> ItemScore {
        ItemScore {
            instance_id: "i".into(),
            annotator_id: None,
            score,
        }
    }

    fn pred(a: &str, i: &str, label: LabelValue) -> PerspectivistPrediction {
        PerspectivistPrediction {
            annotator_id: a.into(),
            instance_id: i.into(),
            label,
        }
    }

    fn gold(a: &str, i: &str, label: LabelValue) -> Rating {
        Rating {
            annotator_id: a.into(),
            instance_id: i.into(),
            label: Some(label),
            explanation: None,
        }
    }

    #[test]
    fn perspectivist_error_examples() {
        let schema = LabelSchema::Binary;
        let scores = score_perspectivist(
            &[
                pred("a", "i0", LabelValue::Scalar(1)),
                pred("a", "i1", LabelValue::Scalar(0)),
            ],
            &[
                gold("a", "i0", LabelValue::Scalar(1)),
                gold("a", "i1", LabelValue::Scalar(1)),
            ],
            &schema,
            SetErrorMode::default(),
        )
        .unwrap();
        assert_eq!(scores[0].score, 0.0);
        assert_eq!(scores[1].score, 1.0);

        let likert = LabelSchema::Likert {
            min_label: 1,
            max_label: 6,
        };
        let scores = score_perspectivist(
            &[pred("a", "i0", LabelValue::Scalar(2))],
            &[gold("a", "i0", LabelValue::Scalar(5))],
            &likert,
            SetErrorMode::default(),
        )
        .unwrap();
        assert_eq!(scores[0].score, 3.0);
    }

    #[test]
    fn label_set_error_modes() {
        let schema = LabelSchema::MultiBinary {
            label_names: vec![
                "entailment".into(),
                "neutral".into(),
                "contradiction".into(),
            ],
            at_least_one_positive: true,
        };
        let p = pred(
            "a",
            "i0",
            LabelValue::Set(vec!["entailment".into(), "neutral".into()]),
        );
        let g = gold("a", "i0", LabelValue::Set(vec!["entailment".into()]));

        let avg = score_perspectivist(
            std::slice::from_ref(&p),
            std::slice::from_ref(&g),
            &schema,
            SetErrorMode::PerLabelAverage,
        )
        .unwrap();
        assert!((avg[0].score - 1.0 / 3.0).abs() < 1e-12);

        let exact = score_perspectivist(&[p], &[g], &schema, SetErrorMode::ExactMatch).unwrap();
        assert_eq!(exact[0].score, 1.0);
    }

    #[test]
    fn missing_predictions_reported() {
        let schema = LabelSchema::Binary;
        let err = score_perspectivist(
            &[pred("a", "i0", LabelValue::Scalar(1))],
            &[
                gold("a", "i0", LabelValue::Scalar(1)),
                gold("b", "i0", LabelValue::Scalar(0)),
                gold("b", "i1", LabelValue::Scalar(0)),
            ],
            &schema,
            SetErrorMode::default(),
        )
        .unwrap_err();
        match err {
            Error::MissingPredictions { count, first } => {
                assert_eq!(count, 2);
                assert_eq!(first, "b@i0");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(manhattan(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(manhattan(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(
            wasserstein_1d(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            1.0
        );
        assert_eq!(wasserstein_1d(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert!(manhattan(&[1.0], &[0.5, 0.5]).is_err());
        assert!(wasserstein_1d(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn mean_ci_examples() {
        let (m, hw) = mean_ci(&[item(0.0), item(0.0), item(0.0), item(0.0)]).unwrap();
        assert_eq!((m, hw), (0.0, 0.0));

        let (m, hw) = mean_ci(&[item(0.0), item(1.0)]).unwrap();
        assert_eq!(m, 0.5);
        assert!((hw - 1.96 * 0.5 / 2f64.sqrt()).abs() < 1e-12);
        assert!((hw - 0.693).abs() < 5e-4);

        let (m, hw) = mean_ci(&[item(0.7)]).unwrap();
        assert_eq!((m, hw), (0.7, 0.0));

        assert!(mean_ci(&[]).is_err());
    }

    #[test]
    fn gold_soft_labels_are_frequencies() {
        let dataset = crate::dataset::fixtures::mini_binary_dataset();
        let gold = gold_soft_labels(&dataset, SplitId::Train).unwrap();
        // i0 was rated 1 by a1 and 0 by a2; i1 only 0; i2 unrated.
        assert_eq!(gold.get("i0").unwrap(), &vec![0.5, 0.5]);
        assert_eq!(gold.get("i1").unwrap(), &vec![1.0, 0.0]);
        assert!(!gold.contains_key("i2"));
    }

    /// Greedy earth-mover on the line: advance two cursors, paying
    /// mass × distance for each matched chunk.
    fn greedy_transport(p: &[f64], q: &[f64]) -> f64 {
        let mut supply = p.to_vec();
        let mut demand = q.to_vec();
        let (mut i, mut j) = (0, 0);
        let mut cost = 0.0;
        while i < supply.len() && j < demand.len() {
            if supply[i] <= 1e-15 {
                i += 1;
                continue;
            }
            if demand[j] <= 1e-15 {
                j += 1;
                continue;
            }
            let moved = supply[i].min(demand[j]);
            cost += moved * (i as f64 - j as f64).abs();
            supply[i] -= moved;
            demand[j] -= moved;
        }
        cost
    }

    fn normalize(v: &[f64]) -> Vec<f64> {
        let t: f64 = v.iter().sum();
        v.iter().map(|x| x / t).collect()
    }

    proptest! {
        #[test]
        fn wasserstein_equals_greedy_transport(
            a in prop::collection::vec(0.01f64..1.0, 6),
            b in prop::collection::vec(0.01f64..1.0, 6),
        ) {
            let p = normalize(&a);
            let q = normalize(&b);
            let w = wasserstein_1d(&p, &q).unwrap();
            let oracle = greedy_transport(&p, &q);
            prop_assert!((w - oracle).abs() < 1e-9, "{w} vs transport {oracle}");
        }

        #[test]
        fn distances_are_metrics(
            a in prop::collection::vec(0.01f64..1.0, 5),
            b in prop::collection::vec(0.01f64..1.0, 5),
            c in prop::collection::vec(0.01f64..1.0, 5),
        ) {
            let p = normalize(&a);
            let q = normalize(&b);
            let r = normalize(&c);
            for dist in [manhattan, wasserstein_1d] {
                let pq = dist(&p, &q).unwrap();
                let qp = dist(&q, &p).unwrap();
                prop_assert!(pq >= 0.0);
                prop_assert!((pq - qp).abs() < 1e-12);
                prop_assert!(dist(&p, &p).unwrap() < 1e-12);
                let pr = dist(&p, &r).unwrap();
                let rq = dist(&r, &q).unwrap();
                prop_assert!(pq <= pr + rq + 1e-9);
            }
            // CDF distance is bounded by span × Manhattan.
            let w = wasserstein_1d(&p, &q).unwrap();
            let m = manhattan(&p, &q).unwrap();
            prop_assert!(w <= m * (p.len() - 1) as f64 + 1e-9);
        }
    }
}
