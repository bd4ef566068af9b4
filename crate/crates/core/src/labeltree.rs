//! Label token trees: decompose a schema's labels into forced-prefix
//! continuation queries and recombine the answers into an exact, normalized
//! distribution over valid labels.
//!
//! Single-token outputs need one query; signed numbers split into a sign
//! query plus conditional digit queries; label-set outputs walk word
//! sequences, with two fidelities for how sequences are closed (see
//! [`TreeMode`]).

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, ContinuationQuery};
use crate::error::{Error, Result};
use crate::schema::{LabelSchema, LabelValue};
use crate::template::{LabelFieldKind, OutputShape};

/// Closes a JSON-string label value and the surrounding object.
pub const VALUE_CLOSE: &str = "\"}";

pub const DEGENERATE_FLOOR: f64 = 1e-6;
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Fidelity of label-set scoring.
///
/// `Minimal` spends the fewest queries: a root pass over first words plus one
/// conditional pass per first word; single-word sets take a closure factor,
/// two-word sets sum both orderings without one, and larger sets get zero
/// mass before renormalization. `Exact` (the default) extends every word
/// sequence with closure queries so each valid set, the full set included,
/// scores the mass the backend actually puts on its serializations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    Minimal,
    #[default]
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub candidate: String,
    pub outcome: BranchOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchOutcome {
    /// Index into `schema.valid_labels()`.
    Leaf(usize),
    /// Recognized continuation that cannot form a valid label.
    Invalid,
    Subtree(TreeNode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub branches: Vec<Branch>,
}

impl TreeNode {
    fn candidates(&self) -> Vec<String> {
        self.branches.iter().map(|b| b.candidate.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelTree {
    pub schema: LabelSchema,
    pub mode: TreeMode,
    pub root: TreeNode,
}

impl LabelTree {
    /// All (path, leaf label index) pairs, in walk order.
    pub fn leaves(&self) -> Vec<(Vec<String>, usize)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        collect_leaves(&self.root, &mut path, &mut out);
        out
    }

    /// Label indexes reachable by at least one leaf.
    pub fn covered_labels(&self) -> Vec<usize> {
        let mut seen = vec![false; self.schema.label_count()];
        for (_, idx) in self.leaves() {
            seen[idx] = true;
        }
        (0..seen.len()).filter(|&i| seen[i]).collect()
    }

    /// Number of backend queries a full evaluation issues when no branch
    /// probability is exactly zero.
    pub fn max_queries(&self) -> usize {
        fn count(node: &TreeNode) -> usize {
            1 + node
                .branches
                .iter()
                .map(|b| match &b.outcome {
                    BranchOutcome::Subtree(sub) => count(sub),
                    _ => 0,
                })
                .sum::<usize>()
        }
        count(&self.root)
    }
}

fn collect_leaves(node: &TreeNode, path: &mut Vec<String>, out: &mut Vec<(Vec<String>, usize)>) {
    for branch in &node.branches {
        path.push(branch.candidate.clone());
        match &branch.outcome {
            BranchOutcome::Leaf(idx) => out.push((path.clone(), *idx)),
            BranchOutcome::Invalid => {}
            BranchOutcome::Subtree(sub) => collect_leaves(sub, path, out),
        }
        path.pop();
    }
}

/// Build the token tree for a schema and output shape.
pub fn label_tree_for(
    schema: &LabelSchema,
    shape: &OutputShape,
    mode: TreeMode,
) -> Result<LabelTree> {
    schema.validate()?;
    let root = match (schema, shape) {
        (LabelSchema::Binary | LabelSchema::Likert { .. }, OutputShape::Bare) => {
            single_pass_root(schema)?
        }
        (
            LabelSchema::Likert {
                min_label,
                max_label,
            },
            OutputShape::Json {
                label_kind: LabelFieldKind::Number,
                ..
            },
        ) => signed_number_root(schema, *min_label, *max_label)?,
        (
            LabelSchema::MultiBinary {
                label_names,
                at_least_one_positive,
            },
            OutputShape::Json {
                label_kind: LabelFieldKind::Text,
                ..
            },
        ) => label_set_root(schema, label_names, *at_least_one_positive, mode)?,
        (schema, shape) => {
            return Err(Error::Schema(format!(
                "no label tree for schema {schema:?} with output shape {shape:?}"
            )));
        }
    };
    Ok(LabelTree {
        schema: schema.clone(),
        mode,
        root,
    })
}

fn single_pass_root(schema: &LabelSchema) -> Result<TreeNode> {
    let branches: Vec<Branch> = schema
        .valid_labels()
        .iter()
        .enumerate()
        .map(|(i, label)| Branch {
            candidate: schema.label_text(label),
            outcome: BranchOutcome::Leaf(i),
        })
        .collect();
    Ok(TreeNode { branches })
}

/// Sign pass (`" "` / `" -"`) then conditional digit passes. Ranges without
/// negatives collapse to one pass over space-prefixed values.
fn signed_number_root(schema: &LabelSchema, min: i64, max: i64) -> Result<TreeNode> {
    let index_of = |v: i64| schema.require_index(&LabelValue::Scalar(v));
    if min >= 0 {
        let branches = (min..=max)
            .map(|v| {
                Ok(Branch {
                    candidate: format!(" {v}"),
                    outcome: BranchOutcome::Leaf(index_of(v)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(TreeNode { branches });
    }
    let negative = TreeNode {
        branches: (1..=-min)
            .map(|m| {
                Ok(Branch {
                    candidate: m.to_string(),
                    outcome: BranchOutcome::Leaf(index_of(-m)?),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let non_negative = TreeNode {
        branches: (0..=max)
            .map(|v| {
                Ok(Branch {
                    candidate: v.to_string(),
                    outcome: BranchOutcome::Leaf(index_of(v)?),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(TreeNode {
        branches: vec![
            Branch {
                candidate: " ".into(),
                outcome: BranchOutcome::Subtree(non_negative),
            },
            Branch {
                candidate: " -".into(),
                outcome: BranchOutcome::Subtree(negative),
            },
        ],
    })
}

fn label_set_root(
    schema: &LabelSchema,
    names: &[String],
    constrained: bool,
    mode: TreeMode,
) -> Result<TreeNode> {
    let set_index = |members: &[usize]| {
        let set: Vec<String> = names
            .iter()
            .enumerate()
            .filter(|(i, _)| members.contains(i))
            .map(|(_, n)| n.clone())
            .collect();
        schema.require_index(&LabelValue::Set(set))
    };
    match mode {
        TreeMode::Minimal => {
            if !constrained {
                return Err(Error::Schema(
                    "minimal label-set trees need the at-least-one-positive constraint; \
                     use exact mode for schemas allowing the empty set"
                        .into(),
                ));
            }
            let branches = (0..names.len())
                .map(|first| {
                    let mut sub = Vec::new();
                    for (j, other) in names.iter().enumerate() {
                        if j == first {
                            continue;
                        }
                        sub.push(Branch {
                            candidate: format!(" {other}"),
                            outcome: BranchOutcome::Leaf(set_index(&[first, j])?),
                        });
                    }
                    sub.push(Branch {
                        candidate: VALUE_CLOSE.into(),
                        outcome: BranchOutcome::Leaf(set_index(&[first])?),
                    });
                    Ok(Branch {
                        candidate: names[first].clone(),
                        outcome: BranchOutcome::Subtree(TreeNode { branches: sub }),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TreeNode { branches })
        }
        TreeMode::Exact => {
            let all: Vec<usize> = (0..names.len()).collect();
            let mut branches = Vec::new();
            if !constrained {
                branches.push(Branch {
                    candidate: VALUE_CLOSE.into(),
                    outcome: BranchOutcome::Leaf(set_index(&[])?),
                });
            }
            for &first in &all {
                branches.push(Branch {
                    candidate: names[first].clone(),
                    outcome: BranchOutcome::Subtree(extend_set(names, &[first], &set_index)?),
                });
            }
            Ok(TreeNode { branches })
        }
    }
}

fn extend_set(
    names: &[String],
    members: &[usize],
    set_index: &impl Fn(&[usize]) -> Result<usize>,
) -> Result<TreeNode> {
    let mut branches = vec![Branch {
        candidate: VALUE_CLOSE.into(),
        outcome: BranchOutcome::Leaf(set_index(members)?),
    }];
    for j in 0..names.len() {
        if members.contains(&j) {
            continue;
        }
        let mut extended = members.to_vec();
        extended.push(j);
        branches.push(Branch {
            candidate: format!(" {}", names[j]),
            outcome: BranchOutcome::Subtree(extend_set(names, &extended, set_index)?),
        });
    }
    Ok(TreeNode { branches })
}

/// A normalized probability vector aligned to `schema.valid_labels()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    pub schema: LabelSchema,
    pub probs: Vec<f64>,
}

impl LabelDistribution {
    pub fn new(schema: LabelSchema, probs: Vec<f64>) -> Result<LabelDistribution> {
        let dist = LabelDistribution { schema, probs };
        dist.validate()?;
        Ok(dist)
    }

    pub fn uniform(schema: &LabelSchema) -> LabelDistribution {
        let n = schema.label_count();
        LabelDistribution {
            schema: schema.clone(),
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(schema: &LabelSchema, label: &LabelValue) -> Result<LabelDistribution> {
        let idx = schema.require_index(label)?;
        let mut probs = vec![0.0; schema.label_count()];
        probs[idx] = 1.0;
        Ok(LabelDistribution {
            schema: schema.clone(),
            probs,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.len() != self.schema.label_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} probabilities for {} labels",
                self.probs.len(),
                self.schema.label_count()
            )));
        }
        if self.probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Validation(
                "distribution has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Validation(format!(
                "distribution sums to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// P(label positive) for each name of a label-set schema, summed over the
    /// sets containing it.
    pub fn marginals(&self) -> Result<Vec<f64>> {
        let LabelSchema::MultiBinary { label_names, .. } = &self.schema else {
            return Err(Error::Schema(
                "marginals are defined only for label-set schemas".into(),
            ));
        };
        let labels = self.schema.valid_labels();
        let mut out = vec![0.0; label_names.len()];
        for (label, &p) in labels.iter().zip(&self.probs) {
            let LabelValue::Set(members) = label else {
                continue;
            };
            for (i, name) in label_names.iter().enumerate() {
                if members.contains(name) {
                    out[i] += p;
                }
            }
        }
        Ok(out)
    }
}

/// Walk the tree from the end of a rendered prompt, multiply branch
/// probabilities down to each leaf, drop invalid and unmatched mass, and
/// renormalize over valid labels.
pub fn compute_distribution(
    tree: &LabelTree,
    prompt_text: &str,
    backend: &dyn Backend,
) -> Result<LabelDistribution> {
    let mut mass = vec![0.0f64; tree.schema.label_count()];
    walk(&tree.root, prompt_text.to_string(), 1.0, backend, &mut mass)?;
    let total: f64 = mass.iter().sum();
    if total < DEGENERATE_FLOOR {
        return Err(Error::DegenerateDistribution { mass: total });
    }
    let probs: Vec<f64> = mass.iter().map(|&m| m / total).collect();
    LabelDistribution::new(tree.schema.clone(), probs)
}

fn walk(
    node: &TreeNode,
    prefix: String,
    weight: f64,
    backend: &dyn Backend,
    mass: &mut [f64],
) -> Result<()> {
    let query = ContinuationQuery {
        prefix: prefix.clone(),
        candidates: node.candidates(),
    };
    let result = backend.query(&query)?;
    result.validate()?;
    if result.probabilities.len() != node.branches.len() {
        return Err(Error::DimensionMismatch(format!(
            "backend returned {} probabilities for {} candidates",
            result.probabilities.len(),
            node.branches.len()
        )));
    }
    for (branch, &p) in node.branches.iter().zip(&result.probabilities) {
        if p == 0.0 {
            continue;
        }
        match &branch.outcome {
            BranchOutcome::Leaf(idx) => mass[*idx] += weight * p,
            BranchOutcome::Invalid => {}
            BranchOutcome::Subtree(sub) => {
                let mut extended = prefix.clone();
                extended.push_str(&branch.candidate);
                walk(sub, extended, weight * p, backend, mass)?;
            }
        }
    }
    Ok(())
}
