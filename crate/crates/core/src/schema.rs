//! Label schemas and label values.
//!
//! Three schema shapes cover the supported datasets: binary labels,
//! integer Likert ranges, and constrained multi-binary label sets
//! (one bit per named label, optionally requiring at least one positive).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The valid label space of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelSchema {
    /// Two labels, 0 and 1.
    Binary,
    /// Integer scale with step 1, inclusive on both ends.
    Likert { min_label: i64, max_label: i64 },
    /// One binary judgment per named label.
    MultiBinary {
        label_names: Vec<String>,
        #[serde(default)]
        at_least_one_positive: bool,
    },
}

/// One annotator's label for one instance.
///
/// `Scalar` covers binary (0/1) and Likert values; `Set` holds the positive
/// label names of a multi-binary judgment in schema order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelValue {
    Scalar(i64),
    Set(Vec<String>),
}

impl LabelSchema {
    pub fn validate(&self) -> Result<()> {
        match self {
            LabelSchema::Binary => Ok(()),
            LabelSchema::Likert {
                min_label,
                max_label,
            } => {
                if min_label >= max_label {
                    return Err(Error::Schema(format!(
                        "likert range must have min < max, got {min_label}..={max_label}"
                    )));
                }
                Ok(())
            }
            LabelSchema::MultiBinary { label_names, .. } => {
                if label_names.is_empty() {
                    return Err(Error::Schema(
                        "multi_binary needs at least one label name".into(),
                    ));
                }
                if label_names.len() > 16 {
                    return Err(Error::Schema(format!(
                        "multi_binary supports at most 16 labels, got {}",
                        label_names.len()
                    )));
                }
                for (i, a) in label_names.iter().enumerate() {
                    if label_names[i + 1..].contains(a) {
                        return Err(Error::Schema(format!("duplicate label name {a:?}")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Number of valid labels (for multi-binary: valid label sets).
    pub fn label_count(&self) -> usize {
        match self {
            LabelSchema::Binary => 2,
            LabelSchema::Likert {
                min_label,
                max_label,
            } => (max_label - min_label + 1) as usize,
            LabelSchema::MultiBinary {
                label_names,
                at_least_one_positive,
            } => {
                let all = 1usize << label_names.len();
                if *at_least_one_positive {
                    all - 1
                } else {
                    all
                }
            }
        }
    }

    /// All valid labels in canonical order.
    ///
    /// Binary: 0, 1. Likert: min..=max. Multi-binary: subsets in bitmask
    /// counting order (bit i = i-th label name), skipping the empty set when
    /// at least one positive is required.
    pub fn valid_labels(&self) -> Vec<LabelValue> {
        match self {
            LabelSchema::Binary => vec![LabelValue::Scalar(0), LabelValue::Scalar(1)],
            LabelSchema::Likert {
                min_label,
                max_label,
            } => (*min_label..=*max_label).map(LabelValue::Scalar).collect(),
            LabelSchema::MultiBinary {
                label_names,
                at_least_one_positive,
            } => {
                let start = usize::from(*at_least_one_positive);
                (start..1 << label_names.len())
                    .map(|mask| LabelValue::Set(mask_to_names(mask, label_names)))
                    .collect()
            }
        }
    }

    /// Canonical index of a label within `valid_labels`, if valid.
    pub fn index_of(&self, label: &LabelValue) -> Option<usize> {
        match (self, label) {
            (LabelSchema::Binary, LabelValue::Scalar(v)) if *v == 0 || *v == 1 => Some(*v as usize),
            (
                LabelSchema::Likert {
                    min_label,
                    max_label,
                },
                LabelValue::Scalar(v),
            ) if v >= min_label && v <= max_label => Some((v - min_label) as usize),
            (
                LabelSchema::MultiBinary {
                    label_names,
                    at_least_one_positive,
                },
                LabelValue::Set(names),
            ) => {
                let mask = names_to_mask(names, label_names)?;
                if mask == 0 && *at_least_one_positive {
                    return None;
                }
                Some(mask - usize::from(*at_least_one_positive))
            }
            _ => None,
        }
    }

    pub fn is_valid(&self, label: &LabelValue) -> bool {
        self.index_of(label).is_some()
    }

    /// Like [`index_of`](Self::index_of), but invalid labels are an error.
    pub fn require_index(&self, label: &LabelValue) -> Result<usize> {
        self.index_of(label).ok_or_else(|| {
            Error::Schema(format!(
                "label {label:?} is not valid under schema {self:?}"
            ))
        })
    }

    /// Normalize a label into canonical form, validating it against the schema.
    ///
    /// Multi-binary sets are reordered into schema order; duplicates are an error.
    pub fn canonicalize(&self, label: &LabelValue) -> Result<LabelValue> {
        match (self, label) {
            (LabelSchema::MultiBinary { label_names, .. }, LabelValue::Set(names)) => {
                let mask = names_to_mask(names, label_names).ok_or_else(|| {
                    Error::Validation(format!(
                        "label set {names:?} contains a name outside the schema or a duplicate"
                    ))
                })?;
                let canonical = LabelValue::Set(mask_to_names(mask, label_names));
                if !self.is_valid(&canonical) {
                    return Err(Error::Validation(format!(
                        "label set {names:?} is not valid under the schema"
                    )));
                }
                Ok(canonical)
            }
            _ => {
                if self.is_valid(label) {
                    Ok(label.clone())
                } else {
                    Err(Error::Validation(format!(
                        "label {label:?} is not valid under schema {self:?}"
                    )))
                }
            }
        }
    }

    /// Display text for a label: the integer for scalars, space-joined names
    /// in schema order for sets.
    pub fn label_text(&self, label: &LabelValue) -> String {
        match label {
            LabelValue::Scalar(v) => v.to_string(),
            LabelValue::Set(names) => names.join(" "),
        }
    }

    /// Display text of every valid label, aligned with `valid_labels`.
    pub fn label_texts(&self) -> Vec<String> {
        self.valid_labels()
            .iter()
            .map(|l| self.label_text(l))
            .collect()
    }

    /// Axis used for soft predictions: full label axis for binary/likert,
    /// one marginal per label name for multi-binary.
    pub fn soft_axis(&self) -> Vec<String> {
        match self {
            LabelSchema::MultiBinary { label_names, .. } => label_names.clone(),
            _ => self.label_texts(),
        }
    }

    pub fn is_multi_binary(&self) -> bool {
        matches!(self, LabelSchema::MultiBinary { .. })
    }
}

fn mask_to_names(mask: usize, label_names: &[String]) -> Vec<String> {
    label_names
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, n)| n.clone())
        .collect()
}

/// Bitmask of a name list, or None on unknown names or duplicates.
pub(crate) fn names_to_mask(names: &[String], label_names: &[String]) -> Option<usize> {
    let mut mask = 0usize;
    for name in names {
        let i = label_names.iter().position(|n| n == name)?;
        if mask & (1 << i) != 0 {
            return None;
        }
        mask |= 1 << i;
    }
    Some(mask)
}

impl LabelValue {
    pub fn as_scalar(&self) -> Option<i64> {
        match self {
            LabelValue::Scalar(v) => Some(*v),
            LabelValue::Set(_) => None,
        }
    }

    pub fn as_set(&self) -> Option<&[String]> {
        match self {
            LabelValue::Scalar(_) => None,
            LabelValue::Set(names) => Some(names),
        }
    }
}
