//! Reference baselines: the global train-majority label and a seeded random
//! label per item.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitId};
use crate::decision::{one_hot_vector, PerspectivistPrediction, SoftPrediction, Strategy};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::labeltree::LabelDistribution;
use crate::schema::LabelValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    MostFrequent,
    Random { seed: u64 },
}

/// The most common label among labeled train ratings; ties keep canonical
/// label order.
pub fn majority_label(dataset: &Dataset) -> Result<LabelValue> {
    let train = dataset.split(SplitId::Train)?;
    let labels = dataset.schema.valid_labels();
    let mut counts = vec![0usize; labels.len()];
    for rating in &train.ratings {
        if let Some(label) = &rating.label {
            counts[dataset.schema.require_index(label)?] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Validation(
            "train split has no labeled ratings to take a majority over".into(),
        ));
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(labels[best].clone())
}

fn random_label(
    dataset: &Dataset,
    kind_seed: u64,
    annotator_id: &str,
    instance_id: &str,
) -> LabelValue {
    let labels = dataset.schema.valid_labels();
    let seed = derive_seed(kind_seed, &[&dataset.name, annotator_id, instance_id]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels[rng.random_range(0..labels.len())].clone()
}

/// One prediction per assignment record in the split.
pub fn baseline_perspectivist(
    dataset: &Dataset,
    split_id: SplitId,
    kind: BaselineKind,
) -> Result<Vec<PerspectivistPrediction>> {
    let split = dataset.split(split_id)?;
    let majority = match kind {
        BaselineKind::MostFrequent => Some(majority_label(dataset)?),
        BaselineKind::Random { .. } => None,
    };
    split
        .ratings
        .iter()
        .map(|r| {
            let label = match kind {
                BaselineKind::MostFrequent => majority.clone().unwrap(),
                BaselineKind::Random { seed } => {
                    random_label(dataset, seed, &r.annotator_id, &r.instance_id)
                }
            };
            Ok(PerspectivistPrediction {
                annotator_id: r.annotator_id.clone(),
                instance_id: r.instance_id.clone(),
                label,
            })
        })
        .collect()
}

/// One soft prediction per assigned instance: one-hot on the majority label,
/// or the uniform distribution.
pub fn baseline_soft(
    dataset: &Dataset,
    split_id: SplitId,
    kind: BaselineKind,
) -> Result<Vec<SoftPrediction>> {
    let split = dataset.split(split_id)?;
    let axis = dataset.schema.soft_axis();
    let probs = match kind {
        BaselineKind::MostFrequent => one_hot_vector(&dataset.schema, &majority_label(dataset)?)?,
        BaselineKind::Random { .. } => {
            crate::decision::soft_vector(&LabelDistribution::uniform(&dataset.schema))?
        }
    };
    Ok(split
        .assigned_instances()
        .map(|instance_id| SoftPrediction {
            instance_id: instance_id.to_string(),
            labels: axis.clone(),
            probs: probs.clone(),
            strategy: Strategy::Mean,
        })
        .collect())
}
